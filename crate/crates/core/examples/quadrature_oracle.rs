//! Evaluate the dual objective and its hypergradient for a logistic loss in two
//! dimensions by Gauss-Hermite quadrature, and check the gradient by finite
//! differences.

use sinkhorn_dro::losses::LogisticLoss;
use sinkhorn_dro::oracles::{
    dual_objective_quadrature, true_hypergradient_quadrature, worstcase_moments, QuadratureGrid,
};
use sinkhorn_dro::{AnchorSet, HyperParams};

fn main() -> sinkhorn_dro::Result<()> {
    let hp = HyperParams::new(2.0, 0.1)?;
    let anchors = AnchorSet::new(
        vec![vec![1.0, 0.4], vec![-0.8, 0.1], vec![0.3, -1.2], vec![-0.2, 0.9]],
        Some(vec![1.0, -1.0, 1.0, -1.0]),
    )?;
    let loss = LogisticLoss::logistic(&anchors)?;
    let grid = QuadratureGrid::gauss_hermite(64, 2)?;
    let theta = [0.7, -0.4];

    let value = dual_objective_quadrature(&theta, &anchors, &hp, &loss, &grid)?;
    let grad = true_hypergradient_quadrature(&theta, &anchors, &hp, &loss, &grid)?;
    println!("F(theta) = {value:.10}");
    println!("grad F   = {grad:.10?}");

    let h = 1e-5;
    for j in 0..2 {
        let (mut up, mut down) = (theta, theta);
        up[j] += h;
        down[j] -= h;
        let fd = (dual_objective_quadrature(&up, &anchors, &hp, &loss, &grid)?
            - dual_objective_quadrature(&down, &anchors, &hp, &loss, &grid)?)
            / (2.0 * h);
        println!(
            "coordinate {j}: quadrature {:.10}, central difference {fd:.10}",
            grad[j]
        );
    }

    for i in 0..anchors.len() {
        let m = worstcase_moments(&theta, &anchors, i, &hp, &loss, &grid)?;
        println!(
            "anchor {i} at {:?}: worst-case mean {:.4?}, variance {:.4?}",
            anchors.point(i),
            m.mean,
            m.variance
        );
    }
    Ok(())
}

//! Step sizes and iteration counts prescribed by the convergence theory for a
//! few target accuracies.

use sinkhorn_dro::double_loop::theorem35_params;
use sinkhorn_dro::langevin::{
    lsi_constant_bounded_loss, lsi_constant_lipschitz_loss, theorem_iteration_count, theorem_step_size,
};
use sinkhorn_dro::single_loop::{theorem45_params, Theorem45Constants};
use sinkhorn_dro::HyperParams;

fn main() -> sinkhorn_dro::Result<()> {
    let hp = HyperParams::new(2.0, 0.1)?;
    println!(
        "LSI constant, loss bounded by 1:        {:.4e}",
        lsi_constant_bounded_loss(1.0, &hp)?.alpha
    );
    println!(
        "LSI constant, gradient bounded by 1, d=2: {:.4e}",
        lsi_constant_lipschitz_loss(1.0, &hp, 2)?.alpha
    );

    let alpha = 1.0 / hp.epsilon();
    println!("\nsampler (alpha = {alpha}, L_f2 = 1, d = 1)");
    for delta in [0.2, 0.1, 0.05, 0.01] {
        let tau = theorem_step_size(alpha, &hp, 1.0, delta, 1)?;
        let steps = theorem_iteration_count(alpha, tau, hp.epsilon(), 1.0, delta)?;
        println!("  delta {delta:<5} tau {tau:.4e}  steps {steps}");
    }

    println!("\ndouble loop (V = 2, L_f2 = 1, F_gap = 0.25)");
    for varrho in [0.4, 0.2, 0.1] {
        let p = theorem35_params(varrho, 2.0, 1.0, 0.25)?;
        println!(
            "  varrho {varrho:<4} delta {:.3}  eta {:.4e}  T_out {}",
            p.delta, p.eta, p.t_out
        );
    }

    println!("\nsingle loop (n = 4, batch = 2, L_f1 = 2, L_f2 = 1)");
    let c = Theorem45Constants {
        lambda: hp.lambda(),
        epsilon: hp.epsilon(),
        alpha,
        l_f1: 2.0,
        l_f2: 1.0,
        d: 1,
        n: 4,
        batch: 2,
        f_gap: 0.25,
        grad_gap: 0.25,
        kl0_sum: 0.0,
    };
    for varrho in [0.4, 0.2, 0.1] {
        let p = theorem45_params(varrho, &c)?;
        println!(
            "  varrho {varrho:<4} beta0 {:.4e}  tau {:.4e}  eta {:.4e}  T {}",
            p.beta0, p.tau, p.eta, p.t_min
        );
    }
    Ok(())
}

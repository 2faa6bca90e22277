//! Cross-checks of the samplers and solvers against closed forms and quadrature.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::experiment::baselines::wdro_inner_maximize;
use crate::langevin::{run_chain, SamplerConfig};
use crate::losses::{LinearLoss, LogisticLoss, QuadraticLoss};
use crate::model::{fmt_f64, AnchorSet, Decision, HyperParams};
use crate::oracles::{
    dual_objective_quadrature, gaussian_worstcase_quadratic, true_hypergradient_quadrature, worstcase_moments,
    QuadratureGrid,
};
use crate::rng::RandomStream;
use crate::single_loop::{run_single_loop, SingleLoopConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(name: &'static str, value: f64, reference: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            reference,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
        }
    }
}

fn benchmark() -> Result<(AnchorSet, HyperParams)> {
    Ok((
        AnchorSet::new(vec![vec![-0.25], vec![0.25], vec![0.75], vec![1.25]], None)?,
        HyperParams::new(2.0, 0.1)?,
    ))
}

/// Run every check; Monte-Carlo checks draw from `seed`.
pub fn run_oracle_checks(seed: u64) -> Result<Vec<OracleCheck>> {
    let (anchors, hp) = benchmark()?;
    let linear = LinearLoss::new(1);
    let grid1 = QuadratureGrid::gauss_hermite(96, 1)?;
    let theta = 0.6;
    let mut checks = Vec::new();

    let m = worstcase_moments(&[theta], &anchors, 3, &hp, &linear, &grid1)?;
    checks.push(OracleCheck::new(
        "linear worst-case mean",
        m.mean[0],
        1.25 + theta / 2.0,
        1e-10,
    ));
    checks.push(OracleCheck::new(
        "linear worst-case variance",
        m.variance[0],
        0.1,
        1e-10,
    ));
    let obj = dual_objective_quadrature(&[theta], &anchors, &hp, &linear, &grid1)?;
    checks.push(OracleCheck::new(
        "linear dual objective",
        obj,
        theta * 0.5 + theta * theta / 4.0,
        1e-10,
    ));

    let labeled = AnchorSet::new(
        vec![vec![1.0, 0.4], vec![-0.8, 0.1], vec![0.3, -1.2], vec![-0.2, 0.9]],
        Some(vec![1.0, -1.0, 1.0, -1.0]),
    )?;
    let logistic = LogisticLoss::logistic(&labeled)?;
    let grid2 = QuadratureGrid::gauss_hermite(64, 2)?;
    let t = [0.7, -0.4];
    let g = true_hypergradient_quadrature(&t, &labeled, &hp, &logistic, &grid2)?;
    let h = 1e-5;
    let fd = |j: usize| -> Result<f64> {
        let mut up = t;
        let mut dn = t;
        up[j] += h;
        dn[j] -= h;
        Ok((dual_objective_quadrature(&up, &labeled, &hp, &logistic, &grid2)?
            - dual_objective_quadrature(&dn, &labeled, &hp, &logistic, &grid2)?)
            / (2.0 * h))
    };
    let (fd0, fd1) = (fd(0)?, fd(1)?);
    let rel = ((g[0] - fd0).powi(2) + (g[1] - fd1).powi(2)).sqrt() / (fd0 * fd0 + fd1 * fd1).sqrt();
    checks.push(OracleCheck::new(
        "logistic hypergradient vs finite differences (relative)",
        rel,
        0.0,
        1e-6,
    ));

    let c = 0.5;
    let quad = QuadraticLoss::new(c, 1, &hp)?;
    let exact = gaussian_worstcase_quadratic(c, &[0.75], &hp)?.mean[0];
    let ascent = wdro_inner_maximize(&[0.0], &[0.75], 0, hp.lambda(), &quad, 2000, 0.2)?;
    checks.push(OracleCheck::new(
        "quadratic worst-case mean vs inner maximizer",
        ascent[0],
        exact,
        1e-10,
    ));

    let stream = RandomStream::new(seed);
    let chains = 4000usize;
    let cfg = SamplerConfig::new(1e-2, 1500, 3)?;
    let mut acc = 0.0;
    for k in 0..chains {
        acc += run_chain(&cfg, &[theta], &anchors, &hp, &linear, &stream.substream(k as u64))?[0];
    }
    // 4 standard errors of a N(., 0.1) mean over 4000 chains.
    let se = (0.1 / chains as f64).sqrt();
    checks.push(OracleCheck::new(
        "Langevin sample mean",
        acc / chains as f64,
        1.25 + theta / 2.0,
        4.0 * se,
    ));

    let mut sl = SingleLoopConfig::new(1e-2, 0.0, 1.0, anchors.len(), 1500, seed).with_particles(256);
    sl.theta0 = Some(Decision::new(vec![theta])?);
    let bank = run_single_loop(&sl, &anchors, &hp, &linear)?.bank;
    for i in 0..anchors.len() {
        checks.push(OracleCheck::new(
            "particle bank mean",
            bank.row_mean(i)[0],
            anchors.point(i)[0] + theta / 2.0,
            0.05,
        ));
        checks.push(OracleCheck::new(
            "particle bank variance",
            bank.row_variance(i)[0],
            0.1,
            0.025,
        ));
    }
    Ok(checks)
}

/// Run the checks and write `oracle_check.csv`.
pub fn oracle_check(out_dir: &Path, seed: u64) -> Result<Vec<OracleCheck>> {
    let checks = run_oracle_checks(seed)?;
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("oracle_check.csv"))?;
    w.write_record(["check", "value", "reference", "tolerance", "pass"])?;
    for c in &checks {
        w.write_record([
            c.name.to_string(),
            fmt_f64(c.value),
            fmt_f64(c.reference),
            fmt_f64(c.tolerance),
            c.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(checks)
}

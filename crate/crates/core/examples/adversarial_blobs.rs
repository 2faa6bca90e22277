//! ERM against single-loop Sinkhorn DRO on Gaussian blobs: train both
//! logistic models on the same 200 points and print their PGD robustness
//! curves on a large test split.
//!
//! `cargo run --release --example adversarial_blobs -- [seed]`

use sinkhorn_dro::experiment::attack::evaluate_robust_accuracy;
use sinkhorn_dro::experiment::commands::{dataset, train_model};
use sinkhorn_dro::experiment::config::ExperimentConfig;
use sinkhorn_dro::losses::ClassifierLoss;

const BASE: &str = r#"
[dataset]
kind = "gauss_blobs"
n_per_class = 100
test_per_class = 50000
d = 2
separation = 1.0
noise = 0.2
[loss]
kind = "logistic"
[attack]
radii = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
steps = 20
step_size = 0.25
"#;

const SOLVERS: [&str; 2] = [
    "kind = \"erm\"\nsteps = 4000\neta = 0.1",
    "kind = \"sdro_single\"\nt = 4000\ntau = 0.05\neta = 2.0\nbeta0 = 0.2\nbatch = 20\nparticles = 8",
];

fn main() -> sinkhorn_dro::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut curves = Vec::new();
    for solver in SOLVERS {
        let cfg = ExperimentConfig::from_toml(&format!("seed = {seed}\n{BASE}[solver]\n{solver}\n"))?;
        let split = dataset(&cfg)?;
        let trained = train_model(&cfg, &split.train)?;
        let loss = ClassifierLoss::from_spec(&cfg.loss, &split.test)?;
        let report = evaluate_robust_accuracy(
            &trained.theta,
            &split.test,
            loss.loss(),
            loss.classifier(),
            &cfg.attack,
            cfg.solver.name(),
        );
        let angle = trained.theta[1].atan2(trained.theta[0]).to_degrees();
        println!(
            "{:<12} theta = {:.3?} ({angle:+.2} deg off the class axis)",
            report.solver,
            trained.theta.as_slice()
        );
        curves.push(report);
    }
    println!("\nradius  {:>12}  {:>12}", curves[0].solver, curves[1].solver);
    for (a, b) in curves[0].rows.iter().zip(&curves[1].rows) {
        println!(
            "{:>6.2}  {:>12.5}  {:>12.5}",
            a.radius_fraction, a.misclassification_rate, b.misclassification_rate
        );
    }
    Ok(())
}

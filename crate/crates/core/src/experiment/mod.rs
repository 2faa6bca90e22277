//! Desk-scale robustness experiments: synthetic data, baseline and Sinkhorn
//! trainers, PGD evaluation, and the artifacts written by the `sdro` binary.

pub mod attack;
pub mod baselines;
pub mod commands;
pub mod config;
pub mod data;
pub mod oracle_check;

pub use attack::{evaluate_robust_accuracy, pgd_attack, RobustnessReport};
pub use baselines::{run_wdro_baseline, train_erm, wdro_inner_maximize};
pub use config::ExperimentConfig;
pub use data::generate_synthetic_dataset;

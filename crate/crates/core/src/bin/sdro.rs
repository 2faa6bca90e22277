use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sinkhorn_dro::experiment::commands;
use sinkhorn_dro::experiment::oracle_check::oracle_check;
use sinkhorn_dro::experiment::ExperimentConfig;
use sinkhorn_dro::Error;

/// Sinkhorn DRO experiments on synthetic data.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` in the config (default `out`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv and test.csv.
    GenData(Common),
    /// Train the configured solver; writes trace.csv, bank.csv and summary.json.
    Train(Common),
    /// Sample worst-case distributions at a fixed decision; writes samples.csv.
    SampleWorstcase {
        #[command(flatten)]
        common: Common,
        /// summary.json holding the decision; zeros when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// PGD-attack the test split; writes report.csv.
    AttackEval {
        #[command(flatten)]
        common: Common,
        /// summary.json holding the decision (default `<out-dir>/summary.json`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Check samplers and solvers against closed forms; writes oracle_check.csv.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

struct Prepared {
    config: ExperimentConfig,
    out_dir: PathBuf,
}

fn prepare(common: &Common) -> Result<Prepared, Error> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Prepared { config, out_dir })
}

fn run(command: Command) -> Result<bool, Error> {
    match command {
        Command::GenData(c) => {
            let p = prepare(&c)?;
            let split = commands::gen_data(&p.config, &p.out_dir)?;
            println!(
                "wrote {} train and {} test points to {}",
                split.train.len(),
                split.test.len(),
                p.out_dir.display()
            );
        }
        Command::Train(c) => {
            let p = prepare(&c)?;
            let s = commands::train(&p.config, &p.out_dir)?;
            println!(
                "{}: {} iterations, train accuracy {:.4}, test accuracy {:.4}, theta {:?}",
                s.solver, s.iterations, s.train_accuracy, s.clean_accuracy, s.theta
            );
        }
        Command::SampleWorstcase { common, model } => {
            let p = prepare(&common)?;
            let n = commands::sample_worstcase(&p.config, &p.out_dir, model.as_deref())?;
            println!("wrote {n} samples to {}", p.out_dir.join("samples.csv").display());
        }
        Command::AttackEval { common, model } => {
            let p = prepare(&common)?;
            let model = model.unwrap_or_else(|| p.out_dir.join("summary.json"));
            let r = commands::attack_eval(&p.config, &p.out_dir, &model)?;
            println!("{}: clean accuracy {:.4}", r.solver, r.clean_accuracy);
            for row in &r.rows {
                println!(
                    "  radius {:.3} ({:.4}): misclassification {:.4}",
                    row.radius_fraction, row.radius, row.misclassification_rate
                );
            }
        }
        Command::OracleCheck { seed, out_dir, .. } => {
            let checks = oracle_check(&out_dir, seed)?;
            for c in &checks {
                println!(
                    "{} {}: {:.6e} vs {:.6e} (tol {:.1e})",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    c.value,
                    c.reference,
                    c.tolerance
                );
            }
            return Ok(checks.iter().all(|c| c.pass));
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => 2,
        _ if e.is_divergence() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::GenData(c) | Command::Train(c) => c.threads,
        Command::SampleWorstcase { common, .. } | Command::AttackEval { common, .. } => common.threads,
        Command::OracleCheck { threads, .. } => *threads,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

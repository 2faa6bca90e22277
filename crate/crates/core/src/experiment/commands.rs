//! The work behind each `sdro` subcommand. Every function writes its
//! artifacts into `out_dir` and returns what it wrote.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::double_loop::{run_double_loop, DoubleLoopConfig};
use crate::error::{Error, Result};
use crate::experiment::attack::{accuracy, evaluate_robust_accuracy, RobustnessReport};
use crate::experiment::baselines::{run_wdro_baseline, train_erm, wdro_inner_maximize};
use crate::experiment::config::{ExperimentConfig, OutputChoice, SolverSpec};
use crate::experiment::data::{generate_synthetic_dataset, Split};
use crate::langevin::{run_chain, LsiEstimate, SamplerConfig, SamplingPlan};
use crate::losses::{initial_theta, ClassifierLoss};
use crate::model::{fmt_f64, AnchorSet, Decision, HyperParams, LossModel};
use crate::rng::RandomStream;
use crate::single_loop::{run_single_loop, ParticleBank, SingleLoopConfig};
use crate::trace::SolverTrace;
use crate::vecops::dist;

pub fn dataset(cfg: &ExperimentConfig) -> Result<Split> {
    generate_synthetic_dataset(&cfg.dataset, &RandomStream::new(cfg.dataset_seed()))
}

/// Result of one training run, before anything touches the disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub theta: Decision,
    pub theta_last: Decision,
    pub theta_hat: Option<Decision>,
    pub trace: SolverTrace,
    pub bank: Option<ParticleBank>,
    /// Mean distance between anchors and their worst-case samples at the trained theta.
    pub mean_transport: Option<f64>,
}

pub fn train_model(cfg: &ExperimentConfig, train: &AnchorSet) -> Result<Trained> {
    let hp = cfg.hp.build()?;
    let loss = ClassifierLoss::from_spec(&cfg.loss, train)?;
    let model = loss.loss();
    let stream = RandomStream::new(cfg.seed);
    let theta0 = initial_theta(&cfg.loss, train.dim(), &stream);
    let pick = |last: Decision, hat: Decision| match cfg.output {
        OutputChoice::Last => last,
        OutputChoice::Uniform => hat,
    };
    Ok(match cfg.solver {
        SolverSpec::Erm { steps, eta } => {
            let out = train_erm(train, model, &theta0, steps, eta, &stream)?;
            Trained {
                theta: out.theta.clone(),
                theta_last: out.theta,
                theta_hat: None,
                trace: out.trace,
                bank: None,
                mean_transport: None,
            }
        }
        SolverSpec::Wdro {
            steps,
            eta,
            inner_steps,
            ascent_rate,
        } => {
            let out = run_wdro_baseline(
                train,
                hp.lambda(),
                model,
                &theta0,
                steps,
                eta,
                inner_steps,
                ascent_rate,
                &stream,
            )?;
            let moved = (0..train.len())
                .map(|i| {
                    let z = wdro_inner_maximize(
                        &out.theta,
                        train.point(i),
                        i,
                        hp.lambda(),
                        model,
                        inner_steps,
                        ascent_rate,
                    )?;
                    Ok(dist(&z, train.point(i)))
                })
                .collect::<Result<Vec<f64>>>()?;
            Trained {
                theta: out.theta.clone(),
                theta_last: out.theta,
                theta_hat: None,
                trace: out.trace,
                bank: None,
                mean_transport: Some(moved.iter().sum::<f64>() / moved.len() as f64),
            }
        }
        SolverSpec::SdroDouble {
            t_out,
            eta,
            tau,
            inner_steps,
        } => {
            let plan = SamplingPlan::Fixed {
                tau,
                steps: inner_steps,
            };
            let mut dl = DoubleLoopConfig::new(eta, t_out, 1.0, cfg.seed)?;
            dl.inner = Some(plan);
            dl.theta0 = Some(theta0);
            let lsi = LsiEstimate::user(1.0 / hp.epsilon())?;
            let out = run_double_loop(&dl, train, &hp, model, &lsi)?;
            let theta = pick(out.theta_last.clone(), out.theta_hat.clone());
            let transport = chain_transport(&theta, train, &hp, model, tau, inner_steps, &stream)?;
            Trained {
                theta,
                theta_last: out.theta_last,
                theta_hat: Some(out.theta_hat),
                trace: out.trace,
                bank: None,
                mean_transport: Some(transport),
            }
        }
        SolverSpec::SdroSingle {
            t,
            tau,
            eta,
            beta0,
            batch,
            particles,
        } => {
            let mut sl = SingleLoopConfig::new(tau, eta, beta0, batch, t, cfg.seed).with_particles(particles);
            sl.theta0 = Some(theta0);
            let out = run_single_loop(&sl, train, &hp, model)?;
            let bank = out.bank;
            let mut total = 0.0;
            for i in 0..bank.anchors() {
                for p in 0..bank.particles_per_anchor() {
                    total += dist(bank.particle(i, p), train.point(i));
                }
            }
            let transport = total / (bank.anchors() * bank.particles_per_anchor()) as f64;
            Trained {
                theta: pick(out.theta_last.clone(), out.theta_hat.clone()),
                theta_last: out.theta_last,
                theta_hat: Some(out.theta_hat),
                trace: out.trace,
                bank: Some(bank),
                mean_transport: Some(transport),
            }
        }
    })
}

// One chain per anchor on a stream the training run never touches.
fn chain_transport<M: LossModel + ?Sized>(
    theta: &[f64],
    train: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    tau: f64,
    steps: usize,
    stream: &RandomStream,
) -> Result<f64> {
    let stream = stream.substream(u64::MAX);
    let moved = (0..train.len())
        .into_par_iter()
        .map(|i| {
            let z = run_chain(&SamplerConfig::new(tau, steps, i)?, theta, train, hp, model, &stream)?;
            Ok(dist(&z, train.point(i)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(moved.iter().sum::<f64>() / moved.len() as f64)
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub solver: String,
    pub seed: u64,
    pub dataset_seed: u64,
    pub output: OutputChoice,
    /// The reported decision, chosen by `output`.
    pub theta: Vec<f64>,
    pub theta_last: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
    pub iterations: usize,
    pub train_accuracy: f64,
    pub clean_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_transport: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_budget: Option<bool>,
    pub wall_clock_seconds: f64,
}

impl TrainSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out_dir)?;
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

/// Write `train.csv` and `test.csv`.
pub fn gen_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Split> {
    let split = dataset(cfg)?;
    split.train.write_csv(create(out_dir, "train.csv")?)?;
    split.test.write_csv(create(out_dir, "test.csv")?)?;
    Ok(split)
}

/// Train the configured solver. Writes `trace.csv`, `bank.csv` for the single
/// loop, and `summary.json` (the only artifact that carries wall-clock time).
pub fn train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainSummary> {
    let start = Instant::now();
    let split = dataset(cfg)?;
    let trained = train_model(cfg, &split.train)?;
    let clf = ClassifierLoss::from_spec(&cfg.loss, &split.train)?;
    trained.trace.write_csv(create(out_dir, "trace.csv")?)?;
    if let Some(bank) = &trained.bank {
        bank.write_csv(create(out_dir, "bank.csv")?)?;
    }
    let c2_budget = cfg.c2_fraction.map(|c| c * split.train.mean_norm());
    let summary = TrainSummary {
        solver: cfg.solver.name().into(),
        seed: cfg.seed,
        dataset_seed: cfg.dataset_seed(),
        output: cfg.output,
        theta: trained.theta.to_vec(),
        theta_last: trained.theta_last.to_vec(),
        theta_hat: trained.theta_hat.as_ref().map(|t| t.to_vec()),
        iterations: trained.trace.len(),
        train_accuracy: accuracy(clf.classifier(), &trained.theta, &split.train),
        clean_accuracy: accuracy(clf.classifier(), &trained.theta, &split.test),
        mean_transport: trained.mean_transport,
        c2_budget,
        within_budget: c2_budget.zip(trained.mean_transport).map(|(b, m)| m <= b),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Attack the test split with the decision stored in `model` and write `report.csv`.
pub fn attack_eval(cfg: &ExperimentConfig, out_dir: &Path, model: &Path) -> Result<RobustnessReport> {
    let start = Instant::now();
    let summary = TrainSummary::load(model)?;
    let split = dataset(cfg)?;
    let loss = ClassifierLoss::from_spec(&cfg.loss, &split.test)?;
    let theta = Decision::new(summary.theta)?;
    if theta.len() != loss.loss().theta_dim() {
        return Err(Error::Config(format!(
            "model has {} parameters but the configured loss needs {}",
            theta.len(),
            loss.loss().theta_dim()
        )));
    }
    let mut report = evaluate_robust_accuracy(
        &theta,
        &split.test,
        loss.loss(),
        loss.classifier(),
        &cfg.attack,
        &summary.solver,
    );
    report.write_csv(create(out_dir, "report.csv")?)?;
    report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

/// Draw `samples_per_anchor` worst-case samples per training anchor at the
/// decision in `model` (zeros if absent) and write `samples.csv`.
pub fn sample_worstcase(cfg: &ExperimentConfig, out_dir: &Path, model: Option<&Path>) -> Result<usize> {
    let split = dataset(cfg)?;
    let train = &split.train;
    let hp = cfg.hp.build()?;
    let loss = ClassifierLoss::from_spec(&cfg.loss, train)?;
    let theta = match model {
        Some(path) => TrainSummary::load(path)?.theta,
        None => initial_theta(&cfg.loss, train.dim(), &RandomStream::new(cfg.seed)).into_inner(),
    };
    let s = cfg.sampler;
    let stream = RandomStream::new(cfg.seed);
    let samples: Vec<Vec<f64>> = (0..train.len() * s.samples_per_anchor)
        .into_par_iter()
        .map(|job| {
            let (i, k) = (job / s.samples_per_anchor, job % s.samples_per_anchor);
            let chain = SamplerConfig::new(s.tau, s.steps, i)?;
            run_chain(&chain, &theta, train, &hp, loss.loss(), &stream.substream(k as u64))
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(create(out_dir, "samples.csv")?);
    let mut header = vec!["anchor_index".to_string(), "sample_index".to_string()];
    header.extend((1..=train.dim()).map(|j| format!("z_{j}")));
    w.write_record(&header)?;
    for (job, z) in samples.iter().enumerate() {
        let mut row = vec![
            (job / s.samples_per_anchor).to_string(),
            (job % s.samples_per_anchor).to_string(),
        ];
        row.extend(z.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(samples.len())
}

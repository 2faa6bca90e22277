//! Mean-field single-loop solver.
//!
//! Every anchor keeps a bank of `m` particles. Each iteration picks a batch of
//! anchors, averages `grad_theta f` over their particles, advances those
//! particles by one Langevin step and moves `theta` along a momentum average of
//! the estimates.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::langevin::{advance, fill_initial, noisy_step, InitialDist, NoiseMode};
use crate::model::{fmt_f64, AnchorSet, Decision, HyperParams, LossModel};
use crate::rng::{Domain, RandomStream, Tag};
use crate::trace::{MomentumRecord, SolverTrace, TraceRecord};
use crate::vecops::{all_finite, norm};

/// Particles for every anchor, stored row-major as `n x m x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleBank {
    n: usize,
    m: usize,
    dim: usize,
    particles: Vec<f64>,
    stamps: Vec<usize>,
}

impl ParticleBank {
    /// Draw `m` particles per anchor from `N(x_i, eps I)`.
    pub fn init(anchors: &AnchorSet, m: usize, hp: &HyperParams, stream: &RandomStream) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "need at least one particle per anchor"));
        }
        let (n, dim) = (anchors.len(), anchors.dim());
        let mut particles = vec![0.0; n * m * dim];
        for (i, row) in particles.chunks_mut(m * dim).enumerate() {
            for (p, z) in row.chunks_mut(dim).enumerate() {
                fill_initial(
                    z,
                    &InitialDist::AnchorGaussian,
                    anchors.point(i),
                    i,
                    hp,
                    stream,
                    Domain::BankInit,
                    p as u64,
                )?;
            }
        }
        Ok(Self {
            n,
            m,
            dim,
            particles,
            stamps: vec![0; n],
        })
    }

    pub fn anchors(&self) -> usize {
        self.n
    }

    pub fn particles_per_anchor(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize, p: usize) -> &[f64] {
        let start = (i * self.m + p) * self.dim;
        &self.particles[start..start + self.dim]
    }

    /// All particles of anchor `i`, flattened.
    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.m * self.dim;
        &self.particles[i * len..(i + 1) * len]
    }

    /// Last iteration at which anchor `i` was updated (0 if never).
    pub fn stamp(&self, i: usize) -> usize {
        self.stamps[i]
    }

    pub fn row_mean(&self, i: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for z in self.row(i).chunks(self.dim) {
            for (a, b) in mean.iter_mut().zip(z) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|a| *a /= self.m as f64);
        mean
    }

    /// Per-coordinate sample variance of anchor `i`'s particles (zero when `m = 1`).
    pub fn row_variance(&self, i: usize) -> Vec<f64> {
        let mean = self.row_mean(i);
        if self.m < 2 {
            return vec![0.0; self.dim];
        }
        let mut var = vec![0.0; self.dim];
        for z in self.row(i).chunks(self.dim) {
            for ((v, zj), mj) in var.iter_mut().zip(z).zip(&mean) {
                *v += (zj - mj).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= (self.m - 1) as f64);
        var
    }

    pub fn all_finite(&self) -> bool {
        all_finite(&self.particles)
    }

    /// CSV with columns `anchor_index, particle_index, z_1..z_d`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["anchor_index".to_string(), "particle_index".to_string()];
        header.extend((1..=self.dim).map(|j| format!("z_{j}")));
        w.write_record(&header)?;
        for i in 0..self.n {
            for p in 0..self.m {
                let mut row = vec![i.to_string(), p.to_string()];
                row.extend(self.particle(i, p).iter().map(|&v| fmt_f64(v)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Step parameters of one bank update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankStep {
    pub tau: f64,
    /// 1-based solver iteration; part of every noise tag.
    pub iteration: usize,
    pub noise: NoiseMode,
}

fn batch_mask(batch: &[usize], n: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in batch {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if mask[i] {
            return Err(Error::invalid("batch", format!("anchor {i} listed twice")));
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// Advance every particle of the anchors in `batch` by one Langevin step.
/// Other rows are left untouched. Particle `p` of anchor `i` draws its noise
/// from tag `(i, iteration, p)`, so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn update_bank<M: LossModel + ?Sized>(
    bank: &mut ParticleBank,
    batch: &[usize],
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    step: BankStep,
    stream: &RandomStream,
) -> Result<()> {
    check_len("bank anchors", anchors.len(), bank.n)?;
    check_len("bank dimension", anchors.dim(), bank.dim)?;
    if !(step.tau > 0.0 && step.tau < 1.0) {
        return Err(Error::invalid("tau", format!("must lie in (0, 1), got {}", step.tau)));
    }
    let mask = batch_mask(batch, bank.n)?;
    let (m, dim) = (bank.m, bank.dim);
    let noise_scale = (2.0 * step.tau * hp.epsilon()).sqrt();
    let k = step.iteration as u64;
    bank.particles
        .par_chunks_mut(m * dim)
        .enumerate()
        .filter(|(i, _)| mask[*i])
        .try_for_each(|(i, row)| {
            let anchor = anchors.point(i);
            let mut grad = vec![0.0; dim];
            for (p, z) in row.chunks_mut(dim).enumerate() {
                let finite = match step.noise {
                    NoiseMode::Gaussian => {
                        let mut rng = stream.rng(Tag::new(Domain::BankNoise, i as u64, k, p as u64));
                        noisy_step(
                            z,
                            &mut grad,
                            theta,
                            anchor,
                            i,
                            hp,
                            model,
                            step.tau,
                            noise_scale,
                            &mut rng,
                        )
                    }
                    NoiseMode::Zero => advance(z, &mut grad, theta, anchor, i, hp, model, step.tau, || 0.0),
                };
                if !finite || !all_finite(z) {
                    return Err(Error::Divergence {
                        step: step.iteration,
                        context: format!("particle {p} of anchor {i} is not finite"),
                    });
                }
            }
            Ok(())
        })?;
    for &i in batch {
        bank.stamps[i] = step.iteration;
    }
    Ok(())
}

/// Average of `grad_theta f` over every particle of the batch anchors.
pub fn gradient_estimator<M: LossModel + ?Sized>(
    bank: &ParticleBank,
    batch: &[usize],
    theta: &[f64],
    model: &M,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "gradient estimator needs a nonempty batch"));
    }
    batch_mask(batch, bank.n)?;
    let dt = model.theta_dim();
    let rows: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&i| {
            let mut sum = vec![0.0; dt];
            let mut g = vec![0.0; dt];
            for z in bank.row(i).chunks(bank.dim) {
                model.grad_theta_into(theta, z, i, &mut g);
                for (s, gj) in sum.iter_mut().zip(&g) {
                    *s += gj;
                }
            }
            sum
        })
        .collect();
    let mut v = vec![0.0; dt];
    for row in &rows {
        for (a, b) in v.iter_mut().zip(row) {
            *a += b;
        }
    }
    let count = (batch.len() * bank.m) as f64;
    v.iter_mut().for_each(|a| *a /= count);
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState {
    pub r: Vec<f64>,
    /// Most recent raw estimate.
    pub v: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            r: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }
}

/// `r' = (1 - beta0) r + beta0 v_new`.
pub fn momentum_update(state: &MomentumState, v_new: &[f64], beta0: f64) -> MomentumState {
    let r = if beta0 == 1.0 {
        v_new.to_vec()
    } else {
        state.r.iter().zip(v_new).map(|(r, v)| r + beta0 * (v - r)).collect()
    };
    MomentumState { r, v: v_new.to_vec() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleLoopConfig {
    /// Langevin step size.
    pub tau: f64,
    /// Upper-level step; `theta` moves by `tau * eta * r`.
    pub eta: f64,
    pub beta0: f64,
    pub batch: usize,
    /// Particles per anchor.
    pub m: usize,
    pub t: usize,
    pub seed: u64,
    pub theta0: Option<Decision>,
    pub log_theta: bool,
}

impl SingleLoopConfig {
    pub const DEFAULT_PARTICLES: usize = 64;

    pub fn new(tau: f64, eta: f64, beta0: f64, batch: usize, t: usize, seed: u64) -> Self {
        Self {
            tau,
            eta,
            beta0,
            batch,
            m: Self::DEFAULT_PARTICLES,
            t,
            seed,
            theta0: None,
            log_theta: false,
        }
    }

    pub fn from_theorem(params: &Theorem45Params, batch: usize, t: usize, seed: u64) -> Self {
        Self::new(params.tau, params.eta, params.beta0, batch, t, seed)
    }

    pub fn with_particles(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("tau", format!("must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be >= 0, got {}", self.eta)));
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return Err(Error::invalid(
                "beta0",
                format!("must lie in (0, 1], got {}", self.beta0),
            ));
        }
        if self.batch == 0 || self.batch > n {
            return Err(Error::invalid(
                "batch",
                format!("must lie in [1, {n}], got {}", self.batch),
            ));
        }
        if self.m == 0 {
            return Err(Error::invalid("m", "need at least one particle per anchor"));
        }
        if self.t == 0 {
            return Err(Error::invalid("t", "need at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleLoopOutput {
    /// Uniformly selected iterate.
    pub theta_hat: Decision,
    pub theta_last: Decision,
    /// Final particles: the sampled worst-case distributions.
    pub bank: ParticleBank,
    pub trace: SolverTrace,
}

pub fn run_single_loop<M: LossModel + ?Sized>(
    config: &SingleLoopConfig,
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
) -> Result<SingleLoopOutput> {
    let n = anchors.len();
    config.validate(n)?;
    check_len("single loop input", model.input_dim(), anchors.dim())?;
    let mut theta = match &config.theta0 {
        Some(t) => t.to_vec(),
        None => vec![0.0; model.theta_dim()],
    };
    check_len("single loop theta0", model.theta_dim(), theta.len())?;

    let stream = RandomStream::new(config.seed);
    let mut bank = ParticleBank::init(anchors, config.m, hp, &stream)?;
    let selected = stream.uniform_index(Tag::domain(Domain::OutputSelect), config.t) + 1;
    let mut theta_hat = Vec::new();
    let mut state = MomentumState::zeros(theta.len());
    let mut trace = SolverTrace::with_capacity(config.t);
    let step_size = config.tau * config.eta;

    for k in 1..=config.t {
        let batch = stream.sample_without_replacement(Tag::new(Domain::BatchSelect, 0, k as u64, 0), n, config.batch);
        let v = gradient_estimator(&bank, &batch, &theta, model).map_err(|e| e.at_step(k))?;
        let step = BankStep {
            tau: config.tau,
            iteration: k,
            noise: NoiseMode::Gaussian,
        };
        update_bank(&mut bank, &batch, &theta, anchors, hp, model, step, &stream)?;
        state = momentum_update(&state, &v, config.beta0);
        for (t, r) in theta.iter_mut().zip(&state.r) {
            *t -= step_size * r;
        }
        if !all_finite(&theta) {
            return Err(Error::Divergence {
                step: k,
                context: "single-loop iterate is not finite".into(),
            });
        }
        if k == selected {
            theta_hat = theta.clone();
        }
        let r_norm = norm(&state.r);
        trace.push(TraceRecord {
            k,
            grad_est_norm: r_norm,
            anchor_index: batch[0],
            momentum: Some(MomentumRecord {
                r_norm,
                v_norm: norm(&state.v),
                batch_size: batch.len(),
            }),
            theta: config.log_theta.then(|| theta.clone()),
        });
    }
    trace.theta_hat = theta_hat.clone();
    trace.selected = selected;
    Ok(SingleLoopOutput {
        theta_hat: Decision::new(theta_hat)?,
        theta_last: Decision::new(theta)?,
        bank,
        trace,
    })
}

/// Problem constants entering the single-loop step-size bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem45Constants {
    pub lambda: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub l_f1: f64,
    pub l_f2: f64,
    pub d: usize,
    pub n: usize,
    pub batch: usize,
    /// `F(theta_0) - F(theta_*)`.
    pub f_gap: f64,
    /// `||grad F(theta_0) - r_0||^2`.
    pub grad_gap: f64,
    /// Sum over anchors of `KL(mu_0 || mu_*)`.
    pub kl0_sum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem45Params {
    pub beta0: f64,
    pub tau: f64,
    pub eta: f64,
    pub t_min: usize,
    /// `1 + L_f2 / lambda`.
    pub l_g2: f64,
}

impl Theorem45Params {
    /// Multiply the two step sizes by fixed factors, keeping `beta0`.
    pub fn scaled(self, tau_factor: f64, eta_factor: f64) -> Self {
        Self {
            tau: self.tau * tau_factor,
            eta: self.eta * eta_factor,
            ..self
        }
    }
}

/// Step sizes at their upper bounds and the matching iteration floor:
///
/// - `beta0 = min(1, varrho^2 |I| / (6 L_f2^2))`
/// - `tau = varrho^2 alpha / (384 eps d L_G2^2 L_f1^2)`
/// - `eta = min(varrho^2 lambda eps alpha |I| / (144 L_f1^2 L_f2^2 n), lambda eps alpha |I| / (160 L_f2^2 n))`
/// - `T = ceil(max(12 F_gap / (eta tau varrho^2), 6 grad_gap / (beta0 varrho^2),
///   48 L_f2^2 sum KL_0 / (alpha tau |I| varrho^2)))`, at least 1.
pub fn theorem45_params(varrho: f64, c: &Theorem45Constants) -> Result<Theorem45Params> {
    for (name, x) in [
        ("varrho", varrho),
        ("lambda", c.lambda),
        ("epsilon", c.epsilon),
        ("alpha", c.alpha),
        ("L_f1", c.l_f1),
        ("L_f2", c.l_f2),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::invalid(name, format!("must be > 0, got {x}")));
        }
    }
    for (name, x) in [("F_gap", c.f_gap), ("grad_gap", c.grad_gap), ("kl0_sum", c.kl0_sum)] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::invalid(name, format!("must be >= 0, got {x}")));
        }
    }
    if c.d == 0 || c.n == 0 || c.batch == 0 || c.batch > c.n {
        return Err(Error::invalid("d, n, batch", "need d >= 1 and 1 <= batch <= n"));
    }
    let (d, n, b) = (c.d as f64, c.n as f64, c.batch as f64);
    let r2 = varrho * varrho;
    let (l1s, l2s) = (c.l_f1 * c.l_f1, c.l_f2 * c.l_f2);
    let l_g2 = 1.0 + c.l_f2 / c.lambda;
    let lec = c.lambda * c.epsilon * c.alpha;

    let beta0 = (r2 * b / (6.0 * l2s)).min(1.0);
    let tau = r2 * c.alpha / (384.0 * c.epsilon * d * l_g2 * l_g2 * l1s);
    let eta = (r2 * lec * b / (144.0 * l1s * l2s * n)).min(lec * b / (160.0 * l2s * n));
    let t = (12.0 * c.f_gap / (eta * tau * r2))
        .max(6.0 * c.grad_gap / (beta0 * r2))
        .max(48.0 * l2s * c.kl0_sum / (c.alpha * tau * b * r2))
        .ceil();
    if t > usize::MAX as f64 {
        return Err(Error::invalid("varrho", "iteration floor overflows"));
    }
    Ok(Theorem45Params {
        beta0,
        tau,
        eta,
        t_min: (t as usize).max(1),
        l_g2,
    })
}

//! Unadjusted Langevin sampling of the per-anchor worst-case densities
//! `u(z) ∝ exp((f(theta, z) - lambda/2 |z - x|^2) / (lambda epsilon))`,
//! together with the step-size / iteration-count rules that guarantee a
//! `W2 <= delta` sample and the log-Sobolev constants they depend on.

use crate::error::{check_len, Error, Result};
use crate::model::{AnchorSet, HyperParams, LossModel};
use crate::rng::{draw_normal, Domain, RandomStream, StreamRng, Tag};
use crate::vecops::all_finite;

/// Initial law of a chain.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialDist {
    /// `N(x_i, epsilon I)` around the chain's anchor.
    AnchorGaussian,
    /// `N(mean, variance I)`; a zero variance starts deterministically at `mean`.
    Custom { mean: Vec<f64>, variance: f64 },
}

/// Whether the Gaussian increments are drawn or forced to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Gaussian,
    /// Drift only; used to test the deterministic part of the update.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub tau: f64,
    pub steps: usize,
    pub anchor_index: usize,
    pub initial: InitialDist,
    pub noise: NoiseMode,
}

impl SamplerConfig {
    pub fn new(tau: f64, steps: usize, anchor_index: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            steps,
            anchor_index,
            initial: InitialDist::AnchorGaussian,
            noise: NoiseMode::Gaussian,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_schedule(schedule: ChainSchedule, anchor_index: usize) -> Self {
        Self {
            tau: schedule.tau,
            steps: schedule.steps,
            anchor_index,
            initial: InitialDist::AnchorGaussian,
            noise: NoiseMode::Gaussian,
        }
    }

    pub fn with_initial(mut self, initial: InitialDist) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "chain needs at least one step"));
        }
        if let InitialDist::Custom { variance, .. } = &self.initial {
            if !(*variance >= 0.0) {
                return Err(Error::invalid("initial variance", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Where a log-Sobolev constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsiProvenance {
    BoundedLoss,
    LipschitzGradient,
    UserSupplied,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsiEstimate {
    pub alpha: f64,
    pub provenance: LsiProvenance,
}

impl LsiEstimate {
    pub fn user(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        Ok(Self {
            alpha,
            provenance: LsiProvenance::UserSupplied,
        })
    }
}

/// LSI constant when `sup f - inf f < bound`: `exp(-4 B / (lambda eps)) / eps`.
pub fn lsi_constant_bounded_loss(bound: f64, hp: &HyperParams) -> Result<LsiEstimate> {
    if !(bound >= 0.0) {
        return Err(Error::invalid("B", "loss range bound must be >= 0"));
    }
    let eps = hp.epsilon();
    Ok(LsiEstimate {
        alpha: (-4.0 * bound / hp.temperature()).exp() / eps,
        provenance: LsiProvenance::BoundedLoss,
    })
}

/// LSI constant when `|grad_z f| <= m` everywhere:
/// `1/(2 eps) * max(exp(-4 m^2/lambda^2 * sqrt(2d/pi)),
///                  1 / (4 + (m/lambda + sqrt 2)^2 (2 + d + 4 m^2/lambda^2) exp(m^2/(2 lambda^2))))`.
pub fn lsi_constant_lipschitz_loss(m: f64, hp: &HyperParams, d: usize) -> Result<LsiEstimate> {
    if !(m >= 0.0) {
        return Err(Error::invalid("M", "gradient bound must be >= 0"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be >= 1"));
    }
    let lam = hp.lambda();
    let df = d as f64;
    let ratio2 = m * m / (lam * lam);
    let first = (-4.0 * ratio2 * (2.0 * df / std::f64::consts::PI).sqrt()).exp();
    let second =
        1.0 / (4.0 + (m / lam + std::f64::consts::SQRT_2).powi(2) * (2.0 + df + 4.0 * ratio2) * (ratio2 / 2.0).exp());
    Ok(LsiEstimate {
        alpha: first.max(second) / (2.0 * hp.epsilon()),
        provenance: LsiProvenance::LipschitzGradient,
    })
}

/// Step size that drives the chain to `W2 <= delta`:
/// `alpha eps / (4 (1 + L_f2/lambda)^2) * min(1, delta^2 alpha / (8 d))`.
pub fn theorem_step_size(alpha: f64, hp: &HyperParams, l_f2: f64, delta: f64, d: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be > 0"));
    }
    if !(l_f2 >= 0.0) {
        return Err(Error::invalid("L_f2", "must be >= 0"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be > 0"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be >= 1"));
    }
    let smooth = 1.0 + l_f2 / hp.lambda();
    let base = alpha * hp.epsilon() / (4.0 * smooth * smooth);
    let shrink = (delta * delta * alpha / (8.0 * d as f64)).min(1.0);
    Ok(base * shrink)
}

/// Iteration count `ceil(log(4 KL0 / (delta^2 alpha)) / (alpha tau eps))`,
/// and 1 when the log argument is at most 1.
pub fn theorem_iteration_count(alpha: f64, tau: f64, epsilon: f64, kl0: f64, delta: f64) -> Result<usize> {
    for (name, v) in [
        ("alpha", alpha),
        ("tau", tau),
        ("epsilon", epsilon),
        ("kl0", kl0),
        ("delta", delta),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be > 0, got {v}")));
        }
    }
    let arg = 4.0 * kl0 / (delta * delta * alpha);
    if arg <= 1.0 {
        return Ok(1);
    }
    let t = (arg.ln() / (alpha * tau * epsilon)).ceil();
    if t > usize::MAX as f64 {
        return Err(Error::invalid("steps", "iteration count overflows"));
    }
    Ok((t as usize).max(1))
}

/// A resolved `(tau, T)` pair for one chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSchedule {
    pub tau: f64,
    pub steps: usize,
}

/// How inner chains pick their step size and length for a target accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingPlan {
    /// Both the step size and the iteration count from the W2 guarantee.
    /// `kl0` defaults to the dimension `d` when unknown.
    Theorem { alpha: f64, l_f2: f64, kl0: Option<f64> },
    /// A caller-chosen step; the iteration count still follows the guarantee.
    FixedStep { tau: f64, alpha: f64, kl0: Option<f64> },
    /// Fully manual.
    Fixed { tau: f64, steps: usize },
}

impl SamplingPlan {
    pub fn theorem(lsi: LsiEstimate, l_f2: f64) -> Self {
        SamplingPlan::Theorem {
            alpha: lsi.alpha,
            l_f2,
            kl0: None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            SamplingPlan::Theorem { alpha, .. } | SamplingPlan::FixedStep { alpha, .. } => Some(alpha),
            SamplingPlan::Fixed { .. } => None,
        }
    }

    pub fn schedule(&self, hp: &HyperParams, delta: f64, d: usize) -> Result<ChainSchedule> {
        match *self {
            SamplingPlan::Theorem { alpha, l_f2, kl0 } => {
                let tau = theorem_step_size(alpha, hp, l_f2, delta, d)?;
                let kl0 = kl0.unwrap_or(d as f64);
                let steps = theorem_iteration_count(alpha, tau, hp.epsilon(), kl0, delta)?;
                Ok(ChainSchedule { tau, steps })
            }
            SamplingPlan::FixedStep { tau, alpha, kl0 } => {
                let kl0 = kl0.unwrap_or(d as f64);
                let steps = theorem_iteration_count(alpha, tau, hp.epsilon(), kl0, delta)?;
                Ok(ChainSchedule { tau, steps })
            }
            SamplingPlan::Fixed { tau, steps } => {
                if !(tau > 0.0) || steps == 0 {
                    return Err(Error::invalid("sampling plan", "need tau > 0 and steps >= 1"));
                }
                Ok(ChainSchedule { tau, steps })
            }
        }
    }
}

/// One Langevin update
/// `z' = z - tau (-grad_z f(theta, z)/lambda + (z - x)) + sqrt(2 tau eps) noise`.
#[allow(clippy::too_many_arguments)]
pub fn langevin_step<M: LossModel + ?Sized>(
    z: &[f64],
    theta: &[f64],
    anchor: &[f64],
    anchor_index: usize,
    hp: &HyperParams,
    model: &M,
    tau: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_len("langevin_step anchor", z.len(), anchor.len())?;
    check_len("langevin_step noise", z.len(), noise.len())?;
    check_len("langevin_step input", model.input_dim(), z.len())?;
    let mut out = z.to_vec();
    let mut grad = vec![0.0; z.len()];
    let noise_scale = (2.0 * tau * hp.epsilon()).sqrt();
    let mut draws = noise.iter();
    let finite = advance(&mut out, &mut grad, theta, anchor, anchor_index, hp, model, tau, || {
        noise_scale * draws.next().copied().unwrap_or(0.0)
    });
    if !finite {
        return Err(Error::EvaluationDomain(
            "non-finite loss gradient in Langevin drift".into(),
        ));
    }
    if !all_finite(&out) {
        return Err(Error::EvaluationDomain("Langevin iterate is not finite".into()));
    }
    Ok(out)
}

// One update in place, written as z' = (1 - tau) z + tau (x + grad/lambda) + increment
// so that only one multiply-add sits on the sequential dependency chain. Returns
// false when the loss gradient was not finite.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub(crate) fn advance<M, F>(
    z: &mut [f64],
    grad: &mut [f64],
    theta: &[f64],
    anchor: &[f64],
    anchor_index: usize,
    hp: &HyperParams,
    model: &M,
    tau: f64,
    mut increment: F,
) -> bool
where
    M: LossModel + ?Sized,
    F: FnMut() -> f64,
{
    model.grad_z_into(theta, z, anchor_index, grad);
    let inv_lambda = 1.0 / hp.lambda();
    let keep = 1.0 - tau;
    let mut finite = true;
    for ((zj, &gj), xj) in z.iter_mut().zip(grad.iter()).zip(anchor) {
        finite &= gj.is_finite();
        let pull = tau * (xj + gj * inv_lambda) + increment();
        *zj = keep * *zj + pull;
    }
    finite
}

#[cold]
pub(crate) fn nonfinite_gradient(step: usize) -> Error {
    Error::EvaluationDomain("non-finite loss gradient in Langevin drift".into()).at_step(step)
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub(crate) fn noisy_step<M: LossModel + ?Sized>(
    z: &mut [f64],
    grad: &mut [f64],
    theta: &[f64],
    anchor: &[f64],
    anchor_index: usize,
    hp: &HyperParams,
    model: &M,
    tau: f64,
    noise_scale: f64,
    rng: &mut StreamRng,
) -> bool {
    advance(z, grad, theta, anchor, anchor_index, hp, model, tau, || {
        noise_scale * draw_normal(rng)
    })
}

/// Overwrite `z` with a draw from the initial law (tag `domain`, `anchor_index`, `particle`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn fill_initial(
    z: &mut [f64],
    initial: &InitialDist,
    anchor: &[f64],
    anchor_index: usize,
    hp: &HyperParams,
    stream: &RandomStream,
    domain: Domain,
    particle: u64,
) -> Result<()> {
    let (mean, variance) = match initial {
        InitialDist::AnchorGaussian => (anchor, hp.epsilon()),
        InitialDist::Custom { mean, variance } => {
            check_len("initial mean", anchor.len(), mean.len())?;
            (mean.as_slice(), *variance)
        }
    };
    stream.fill_normal(Tag::new(domain, anchor_index as u64, 0, particle), z);
    let sd = variance.sqrt();
    for (zj, mj) in z.iter_mut().zip(mean) {
        *zj = mj + sd * *zj;
    }
    Ok(())
}

// Chain body shared by `run_chain` and the solvers; `config` is already validated.
#[allow(clippy::too_many_arguments)]
pub(crate) fn chain_into<M: LossModel + ?Sized>(
    z: &mut [f64],
    grad: &mut [f64],
    config: &SamplerConfig,
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    stream: &RandomStream,
) -> Result<()> {
    let i = config.anchor_index;
    let anchor = anchors.point(i);
    fill_initial(z, &config.initial, anchor, i, hp, stream, Domain::ChainInit, 0)?;
    // Fixed-size copies let the compiler keep low-dimensional states in registers.
    match z.len() {
        1 => steps_fixed::<M, 1>(z, config, theta, anchor, hp, model, stream)?,
        2 => steps_fixed::<M, 2>(z, config, theta, anchor, hp, model, stream)?,
        _ => steps(z, grad, config, theta, anchor, hp, model, stream)?,
    }
    if !all_finite(z) {
        return Err(Error::Divergence {
            step: config.steps,
            context: "Langevin chain left the finite range".into(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn steps_fixed<M: LossModel + ?Sized, const D: usize>(
    z: &mut [f64],
    config: &SamplerConfig,
    theta: &[f64],
    anchor: &[f64],
    hp: &HyperParams,
    model: &M,
    stream: &RandomStream,
) -> Result<()> {
    let mut local = [0.0; D];
    local.copy_from_slice(z);
    let mut grad = [0.0; D];
    let mut x = [0.0; D];
    x.copy_from_slice(anchor);
    steps(&mut local, &mut grad, config, theta, &x, hp, model, stream)?;
    z.copy_from_slice(&local);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn steps<M: LossModel + ?Sized>(
    z: &mut [f64],
    grad: &mut [f64],
    config: &SamplerConfig,
    theta: &[f64],
    anchor: &[f64],
    hp: &HyperParams,
    model: &M,
    stream: &RandomStream,
) -> Result<()> {
    let i = config.anchor_index;
    match config.noise {
        NoiseMode::Zero => {
            for t in 0..config.steps {
                if !advance(z, grad, theta, anchor, i, hp, model, config.tau, || 0.0) {
                    return Err(nonfinite_gradient(t));
                }
            }
        }
        NoiseMode::Gaussian => {
            let noise_scale = (2.0 * config.tau * hp.epsilon()).sqrt();
            let mut rng = stream.rng(Tag::new(Domain::ChainNoise, i as u64, 0, 0));
            for t in 0..config.steps {
                if !noisy_step(z, grad, theta, anchor, i, hp, model, config.tau, noise_scale, &mut rng) {
                    return Err(nonfinite_gradient(t));
                }
            }
        }
    }
    Ok(())
}

/// Run one chain for `config.steps` steps and return its final state.
///
/// Randomness is addressed by the chain's anchor index within `stream`; use
/// `stream.substream(r)` to obtain independent replicas.
pub fn run_chain<M: LossModel + ?Sized>(
    config: &SamplerConfig,
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    config.validate()?;
    anchors.check_index(config.anchor_index)?;
    check_len("run_chain input", model.input_dim(), anchors.dim())?;
    check_len("run_chain theta", model.theta_dim(), theta.len())?;
    let mut z = vec![0.0; anchors.dim()];
    let mut grad = vec![0.0; anchors.dim()];
    chain_into(&mut z, &mut grad, config, theta, anchors, hp, model, stream)?;
    Ok(z)
}

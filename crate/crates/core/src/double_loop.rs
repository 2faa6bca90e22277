//! Double-loop SGD: each outer step samples an anchor, runs a fresh Langevin
//! chain to accuracy `delta` and takes one step along `grad_theta f` at the
//! returned sample.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::langevin::{chain_into, ChainSchedule, LsiEstimate, SamplerConfig, SamplingPlan};
use crate::model::{AnchorSet, Decision, HyperParams, LossModel};
use crate::oracles::{lemma34_variance_bound, total_variance};
use crate::rng::{Domain, RandomStream, Tag};
use crate::trace::{SolverTrace, TraceRecord};
use crate::vecops::{all_finite, dist, mean_of, norm};

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleLoopConfig {
    pub eta: f64,
    pub t_out: usize,
    pub delta: f64,
    /// Target stationarity the other fields were derived from, if any.
    pub varrho: Option<f64>,
    pub seed: u64,
    /// Inner schedule; `None` uses the theorem step size and iteration count
    /// from the run's LSI constant and the model's `L_f2`.
    pub inner: Option<SamplingPlan>,
    pub theta0: Option<Decision>,
    /// Record every iterate in the trace.
    pub log_theta: bool,
}

impl DoubleLoopConfig {
    pub fn new(eta: f64, t_out: usize, delta: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            eta,
            t_out,
            delta,
            varrho: None,
            seed,
            inner: None,
            theta0: None,
            log_theta: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameters from [`theorem35_params`] for a target stationarity `varrho`.
    pub fn from_theorem(params: Theorem35Params, varrho: f64, seed: u64) -> Self {
        Self {
            eta: params.eta,
            t_out: params.t_out,
            delta: params.delta,
            varrho: Some(varrho),
            seed,
            inner: None,
            theta0: None,
            log_theta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be >= 0, got {}", self.eta)));
        }
        if self.t_out == 0 {
            return Err(Error::invalid("t_out", "need at least one outer iteration"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// One-sample hypergradient estimate `grad_theta f(theta, z)`.
pub fn hypergradient_estimate<M: LossModel + ?Sized>(
    model: &M,
    theta: &[f64],
    z: &[f64],
    anchor_index: usize,
) -> Vec<f64> {
    model.grad_theta(theta, z, anchor_index)
}

/// Resolve the inner chain schedule for accuracy `delta`.
pub fn inner_schedule<M: LossModel + ?Sized>(
    plan: Option<&SamplingPlan>,
    lsi: &LsiEstimate,
    model: &M,
    hp: &HyperParams,
    delta: f64,
) -> Result<ChainSchedule> {
    let plan = match plan {
        Some(p) => *p,
        None => {
            let l_f2 = model.lipschitz().l_f2.ok_or_else(|| {
                Error::invalid("L_f2", "loss declares no smoothness constant; supply an inner schedule")
            })?;
            SamplingPlan::theorem(*lsi, l_f2)
        }
    };
    plan.schedule(hp, delta, model.input_dim())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleLoopOutput {
    /// Uniformly selected iterate.
    pub theta_hat: Decision,
    /// Last iterate.
    pub theta_last: Decision,
    pub trace: SolverTrace,
    pub schedule: ChainSchedule,
}

pub fn run_double_loop<M: LossModel + ?Sized>(
    config: &DoubleLoopConfig,
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    lsi: &LsiEstimate,
) -> Result<DoubleLoopOutput> {
    config.validate()?;
    check_len("double loop input", model.input_dim(), anchors.dim())?;
    let schedule = inner_schedule(config.inner.as_ref(), lsi, model, hp, config.delta)?;
    let mut theta = match &config.theta0 {
        Some(t) => t.to_vec(),
        None => vec![0.0; model.theta_dim()],
    };
    check_len("double loop theta0", model.theta_dim(), theta.len())?;

    let stream = RandomStream::new(config.seed);
    let n = anchors.len();
    let selected = stream.uniform_index(Tag::domain(Domain::OutputSelect), config.t_out) + 1;
    let mut theta_hat = Vec::new();
    let mut trace = SolverTrace::with_capacity(config.t_out);
    let mut z = vec![0.0; anchors.dim()];
    let mut zgrad = vec![0.0; anchors.dim()];
    let mut g = vec![0.0; theta.len()];

    for k in 1..=config.t_out {
        let i = stream.uniform_index(Tag::new(Domain::AnchorSelect, 0, k as u64, 0), n);
        let chain = SamplerConfig::from_schedule(schedule, i);
        chain_into(
            &mut z,
            &mut zgrad,
            &chain,
            &theta,
            anchors,
            hp,
            model,
            &stream.substream(k as u64),
        )
        .map_err(|e| e.at_step(k))?;
        model.grad_theta_into(&theta, &z, i, &mut g);
        for (t, gj) in theta.iter_mut().zip(&g) {
            *t -= config.eta * gj;
        }
        if !all_finite(&theta) {
            return Err(Error::Divergence {
                step: k,
                context: "double-loop iterate is not finite".into(),
            });
        }
        if k == selected {
            theta_hat = theta.clone();
        }
        trace.push(TraceRecord {
            k,
            grad_est_norm: norm(&g),
            anchor_index: i,
            momentum: None,
            theta: config.log_theta.then(|| theta.clone()),
        });
    }
    trace.theta_hat = theta_hat.clone();
    trace.selected = selected;
    Ok(DoubleLoopOutput {
        theta_hat: Decision::new(theta_hat)?,
        theta_last: Decision::new(theta)?,
        trace,
        schedule,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem35Params {
    pub t_out: usize,
    pub eta: f64,
    pub delta: f64,
}

/// `eta = 1 / sqrt(T_out V)`.
pub fn theorem35_eta(t_out: usize, v: f64) -> f64 {
    1.0 / (t_out as f64 * v).sqrt()
}

/// `delta = varrho / (2 L_f2)`, `T_out = ceil(16 V (2 F_gap + L_f2)^2 / varrho^4)`,
/// `eta = 1 / sqrt(T_out V)`.
pub fn theorem35_params(varrho: f64, v: f64, l_f2: f64, f_gap: f64) -> Result<Theorem35Params> {
    for (name, x) in [("varrho", varrho), ("V", v), ("L_f2", l_f2)] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::invalid(name, format!("must be > 0, got {x}")));
        }
    }
    if !(f_gap >= 0.0 && f_gap.is_finite()) {
        return Err(Error::invalid("F_gap", format!("must be >= 0, got {f_gap}")));
    }
    let t = (16.0 * v * (2.0 * f_gap + l_f2).powi(2) / varrho.powi(4)).ceil();
    if t > usize::MAX as f64 {
        return Err(Error::invalid("T_out", "iteration count overflows"));
    }
    let t_out = (t as usize).max(1);
    Ok(Theorem35Params {
        t_out,
        eta: theorem35_eta(t_out, v),
        delta: varrho / (2.0 * l_f2),
    })
}

/// Variance statistics from a pilot run at a fixed theta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotEstimate {
    pub sigma2: f64,
    /// Declared `L_f1`, or half the largest deviation of a pilot gradient from the pilot mean.
    pub l_f1: f64,
    pub v: f64,
    pub samples: usize,
}

/// Estimate the variance ceiling `V` from `samples` one-sample estimates at `theta`,
/// each drawn from a chain at accuracy `delta` around a uniformly chosen anchor.
#[allow(clippy::too_many_arguments)]
pub fn pilot_variance<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    lsi: &LsiEstimate,
    schedule: ChainSchedule,
    delta: f64,
    samples: usize,
    stream: &RandomStream,
) -> Result<PilotEstimate> {
    if samples < 2 {
        return Err(Error::invalid("samples", "pilot needs at least two samples"));
    }
    let l_f2 = model
        .lipschitz()
        .l_f2
        .ok_or_else(|| Error::invalid("L_f2", "loss declares no smoothness constant"))?;
    let n = anchors.len();
    let grads: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let i = stream.uniform_index(Tag::new(Domain::Pilot, 0, s, 0), n);
            let chain = SamplerConfig::from_schedule(schedule, i);
            let mut z = vec![0.0; anchors.dim()];
            let mut zg = vec![0.0; anchors.dim()];
            chain_into(&mut z, &mut zg, &chain, theta, anchors, hp, model, &stream.substream(s))?;
            Ok(model.grad_theta(theta, &z, i))
        })
        .collect::<Result<_>>()?;
    let sigma2 = total_variance(&grads)?;
    // The bound only needs 4 L_f1^2 >= |g - E g|^2, so without a declared
    // constant use half the widest spread seen in the pilot.
    let l_f1 = match model.lipschitz().l_f1 {
        Some(l) => l,
        None => {
            let mean = mean_of(grads.iter().map(Vec::as_slice), theta.len());
            grads.iter().map(|g| dist(g, &mean)).fold(0.0, f64::max) / 2.0
        }
    };
    let v = lemma34_variance_bound(sigma2, l_f1, l_f2, lsi.alpha, delta)?;
    Ok(PilotEstimate {
        sigma2,
        l_f1,
        v,
        samples,
    })
}

/// Monte-Carlo estimate of `|grad F(theta)|` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stationarity {
    pub norm: f64,
    /// Standard error of the averaged gradient, `sqrt(sample variance / count)`.
    pub standard_error: f64,
}

/// Average `replicas` fresh chains per anchor, each run by `plan` at accuracy
/// `delta_eval`, and return the norm of the mean estimate.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_norm<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    replicas: usize,
    delta_eval: f64,
    plan: &SamplingPlan,
    stream: &RandomStream,
) -> Result<Stationarity> {
    if replicas == 0 {
        return Err(Error::invalid("replicas", "need at least one replica"));
    }
    let schedule = plan.schedule(hp, delta_eval, anchors.dim())?;
    check_len("stationarity theta", model.theta_dim(), theta.len())?;
    let n = anchors.len();
    let count = n * replicas;
    let stream = stream.substream(Domain::Stationarity as u64);
    let grads: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|job| {
            let (i, r) = (job % n, job / n);
            let chain = SamplerConfig::from_schedule(schedule, i);
            let mut z = vec![0.0; anchors.dim()];
            let mut zg = vec![0.0; anchors.dim()];
            chain_into(
                &mut z,
                &mut zg,
                &chain,
                theta,
                anchors,
                hp,
                model,
                &stream.substream(r as u64),
            )?;
            Ok(model.grad_theta(theta, &z, i))
        })
        .collect::<Result<_>>()?;
    let mean = mean_of(grads.iter().map(Vec::as_slice), theta.len());
    let standard_error = if count > 1 {
        (total_variance(&grads)? / count as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Stationarity {
        norm: norm(&mean),
        standard_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LinearLoss, QuadraticLoss};

    fn bench() -> (AnchorSet, HyperParams) {
        (
            AnchorSet::new(vec![vec![-0.25], vec![0.25], vec![0.75], vec![1.25]], None).unwrap(),
            HyperParams::new(2.0, 0.1).unwrap(),
        )
    }

    #[test]
    fn estimator_closed_forms() {
        let h = HyperParams::new(2.0, 0.1).unwrap();
        assert_eq!(
            hypergradient_estimate(&LinearLoss::new(2), &[0.1, 0.2], &[0.3, -0.4], 0),
            vec![0.3, -0.4]
        );
        let q = QuadraticLoss::new(0.5, 2, &h).unwrap();
        assert_eq!(hypergradient_estimate(&q, &[0.1], &[0.3, -0.4], 0), vec![0.0]);
    }

    #[test]
    fn theorem35_values() {
        let p = theorem35_params(0.1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.delta, 0.05);
        let half = theorem35_params(0.05, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(half.t_out, 16 * p.t_out);
        assert_eq!(theorem35_eta(100, 4.0), 0.05);
        // 16 * 2 * (2 * 0.5 + 1)^2 / 0.5^4 = 2048
        let q = theorem35_params(0.5, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(q.t_out, 2048);
        assert_eq!(q.eta, 1.0 / 64.0);
    }

    #[test]
    fn zero_rate_single_step_is_noop() {
        let (a, h) = bench();
        let cfg = DoubleLoopConfig::new(0.0, 1, 0.05, 3).unwrap();
        let lsi = LsiEstimate::user(10.0).unwrap();
        let out = run_double_loop(&cfg, &a, &h, &LinearLoss::new(1), &lsi).unwrap();
        assert_eq!(out.theta_hat.as_slice(), &[0.0]);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace.selected, 1);
    }

    #[test]
    fn fixed_seed_reproducible() {
        let (a, h) = bench();
        let mut cfg = DoubleLoopConfig::new(0.05, 30, 0.2, 11).unwrap();
        cfg.log_theta = true;
        let lsi = LsiEstimate::user(10.0).unwrap();
        let a1 = run_double_loop(&cfg, &a, &h, &LinearLoss::new(1), &lsi).unwrap();
        let a2 = run_double_loop(&cfg, &a, &h, &LinearLoss::new(1), &lsi).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn quadratic_stationarity_is_zero() {
        let (a, h) = bench();
        let q = QuadraticLoss::new(0.5, 1, &h).unwrap();
        let s = stationarity_norm(
            &[0.0],
            &a,
            &h,
            &q,
            3,
            0.05,
            &SamplingPlan::Fixed { tau: 0.01, steps: 10 },
            &RandomStream::new(0),
        )
        .unwrap();
        assert_eq!(s.norm, 0.0);
    }

    #[test]
    fn missing_smoothness_needs_explicit_schedule() {
        struct Opaque;
        impl LossModel for Opaque {
            fn theta_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn value(&self, t: &[f64], z: &[f64], _: usize) -> f64 {
                t[0] * z[0]
            }
            fn grad_theta_into(&self, _: &[f64], z: &[f64], _: usize, out: &mut [f64]) {
                out[0] = z[0]
            }
            fn grad_z_into(&self, t: &[f64], _: &[f64], _: usize, out: &mut [f64]) {
                out[0] = t[0]
            }
        }
        let (a, h) = bench();
        let lsi = LsiEstimate::user(10.0).unwrap();
        let cfg = DoubleLoopConfig::new(0.1, 5, 0.1, 0).unwrap();
        assert!(run_double_loop(&cfg, &a, &h, &Opaque, &lsi).is_err());
        let mut cfg = cfg;
        cfg.inner = Some(SamplingPlan::Fixed { tau: 0.05, steps: 20 });
        assert!(run_double_loop(&cfg, &a, &h, &Opaque, &lsi).is_ok());
    }
}

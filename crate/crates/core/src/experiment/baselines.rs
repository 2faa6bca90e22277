//! Empirical risk minimization and the penalized Wasserstein dual, the two
//! reference trainers for robustness comparisons.

use crate::error::{Error, Result};
use crate::model::{AnchorSet, Decision, LossModel};
use crate::rng::{Domain, RandomStream, Tag};
use crate::trace::{SolverTrace, TraceRecord};
use crate::vecops::{all_finite, norm};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutput {
    pub theta: Decision,
    pub trace: SolverTrace,
}

/// SGD on `(1/n) sum_i f(theta, x_i)` with one uniformly drawn anchor per step.
pub fn train_erm<M: LossModel + ?Sized>(
    train: &AnchorSet,
    model: &M,
    theta0: &Decision,
    steps: usize,
    eta: f64,
    stream: &RandomStream,
) -> Result<BaselineOutput> {
    sgd(train, model, theta0, steps, eta, stream, |_, x, _| Ok(x.to_vec()))
}

/// Gradient ascent on `z -> f(theta, z) - (lambda/2) |z - x|^2` started at `x`.
pub fn wdro_inner_maximize<M: LossModel + ?Sized>(
    theta: &[f64],
    anchor: &[f64],
    anchor_index: usize,
    lambda: f64,
    model: &M,
    steps: usize,
    ascent_rate: f64,
) -> Result<Vec<f64>> {
    let mut z = anchor.to_vec();
    let mut g = vec![0.0; z.len()];
    for step in 1..=steps {
        model.grad_z_into(theta, &z, anchor_index, &mut g);
        for ((zj, gj), xj) in z.iter_mut().zip(&g).zip(anchor) {
            *zj += ascent_rate * (gj - lambda * (*zj - xj));
        }
        if !all_finite(&z) {
            return Err(Error::Divergence {
                step,
                context: format!(
                    "inner ascent diverged; try a larger lambda (currently {lambda}) or a smaller ascent rate"
                ),
            });
        }
    }
    Ok(z)
}

/// SGD on the penalized Wasserstein dual: each step maximizes the inner
/// problem at one sampled anchor and descends along `grad_theta f` there.
#[allow(clippy::too_many_arguments)]
pub fn run_wdro_baseline<M: LossModel + ?Sized>(
    train: &AnchorSet,
    lambda: f64,
    model: &M,
    theta0: &Decision,
    steps: usize,
    eta: f64,
    inner_steps: usize,
    ascent_rate: f64,
    stream: &RandomStream,
) -> Result<BaselineOutput> {
    sgd(train, model, theta0, steps, eta, stream, |theta, x, i| {
        wdro_inner_maximize(theta, x, i, lambda, model, inner_steps, ascent_rate)
    })
}

fn sgd<M, F>(
    train: &AnchorSet,
    model: &M,
    theta0: &Decision,
    steps: usize,
    eta: f64,
    stream: &RandomStream,
    mut point: F,
) -> Result<BaselineOutput>
where
    M: LossModel + ?Sized,
    F: FnMut(&[f64], &[f64], usize) -> Result<Vec<f64>>,
{
    let mut theta = theta0.to_vec();
    let mut g = vec![0.0; theta.len()];
    let mut trace = SolverTrace::with_capacity(steps);
    for k in 1..=steps {
        let i = stream.uniform_index(Tag::new(Domain::Baseline, 0, k as u64, 0), train.len());
        let z = point(&theta, train.point(i), i).map_err(|e| e.at_step(k))?;
        model.grad_theta_into(&theta, &z, i, &mut g);
        for (t, gj) in theta.iter_mut().zip(&g) {
            *t -= eta * gj;
        }
        if !all_finite(&theta) {
            return Err(Error::Divergence {
                step: k,
                context: "baseline iterate is not finite".into(),
            });
        }
        trace.push(TraceRecord {
            k,
            grad_est_norm: norm(&g),
            anchor_index: i,
            momentum: None,
            theta: None,
        });
    }
    trace.theta_hat = theta.clone();
    trace.selected = steps;
    Ok(BaselineOutput {
        theta: Decision::new(theta)?,
        trace,
    })
}

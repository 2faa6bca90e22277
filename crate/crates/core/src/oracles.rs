//! Ground truth for the samplers and solvers: closed-form Gaussian worst cases,
//! quadrature for the dual objective and its gradient, Wasserstein distances and
//! the estimator variance ceiling.
//!
//! Quadrature works on grids for the standard normal reference measure. A node
//! `xi` maps to `z = x + sqrt(eps) * xi` around anchor `x`, so that
//! `E_{N(x, eps I)}[g(z)] ~= sum_k w_k g(x + sqrt(eps) xi_k)`.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_len, Error, Result};
use crate::model::{AnchorSet, HyperParams, LossModel};
use crate::rng::{RandomStream, Tag};
use crate::vecops::{dist, log_sum_exp};

/// Isotropic Gaussian `N(mean, variance_scale * I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    pub mean: Vec<f64>,
    pub variance_scale: f64,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, variance_scale: f64) -> Result<Self> {
        if !(variance_scale > 0.0 && variance_scale.is_finite()) {
            return Err(Error::invalid(
                "variance_scale",
                format!("must be > 0, got {variance_scale}"),
            ));
        }
        Ok(Self { mean, variance_scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw addressed by `tag`.
    pub fn sample(&self, stream: &RandomStream, tag: Tag) -> Vec<f64> {
        let sd = self.variance_scale.sqrt();
        let mut z = stream.normal_vec(tag, self.dim());
        for (zj, mj) in z.iter_mut().zip(&self.mean) {
            *zj = mj + sd * *zj;
        }
        z
    }
}

/// Worst case for `f(theta, z) = theta . z`: `N(x + theta/lambda, eps I)`.
pub fn gaussian_worstcase_linear(theta: &[f64], anchor: &[f64], hp: &HyperParams) -> Result<GaussianDist> {
    check_len("gaussian_worstcase_linear", anchor.len(), theta.len())?;
    let mean = anchor.iter().zip(theta).map(|(x, t)| x + t / hp.lambda()).collect();
    GaussianDist::new(mean, hp.epsilon())
}

/// Worst case for `f(z) = c/2 |z|^2`: `N(lambda x/(lambda - c), lambda eps/(lambda - c) I)`.
pub fn gaussian_worstcase_quadratic(c: f64, anchor: &[f64], hp: &HyperParams) -> Result<GaussianDist> {
    let lam = hp.lambda();
    if !(c < lam) {
        return Err(Error::invalid(
            "c",
            format!("worst-case density is not normalizable for c >= lambda (c = {c}, lambda = {lam})"),
        ));
    }
    let shrink = lam / (lam - c);
    GaussianDist::new(anchor.iter().map(|x| shrink * x).collect(), shrink * hp.epsilon())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussHermite,
    Trapezoid,
}

/// Tensor-product rule for the standard normal measure in `dim <= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    kind: QuadratureKind,
    dim: usize,
    per_axis: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

/// Half-width of the trapezoid rule, in standard deviations.
pub const TRAPEZOID_HALF_WIDTH: f64 = 8.0;

/// Smallest per-axis node count accepted by the quadrature oracles.
pub const MIN_NODES_PER_AXIS: usize = 64;

impl QuadratureGrid {
    /// Gauss-Hermite rule rescaled from weight `exp(-t^2)` to the standard normal.
    pub fn gauss_hermite(per_axis: usize, dim: usize) -> Result<Self> {
        let count = NonZeroUsize::new(per_axis).ok_or_else(|| Error::invalid("per_axis", "need at least one node"))?;
        let rule = GaussHermite::new(count);
        let scale = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        let axis: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, w)| (t * scale, w / norm))
            .collect();
        Self::tensor(QuadratureKind::GaussHermite, &axis, dim)
    }

    /// Trapezoid rule on `[-8, 8]` with weights `h * phi(xi)`.
    pub fn trapezoid(per_axis: usize, dim: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::invalid("per_axis", "trapezoid needs at least two nodes"));
        }
        let a = TRAPEZOID_HALF_WIDTH;
        let h = 2.0 * a / (per_axis - 1) as f64;
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let axis: Vec<(f64, f64)> = (0..per_axis)
            .map(|k| {
                let xi = -a + h * k as f64;
                let end = if k == 0 || k + 1 == per_axis { 0.5 } else { 1.0 };
                (xi, end * h * inv_sqrt_2pi * (-0.5 * xi * xi).exp())
            })
            .collect();
        Self::tensor(QuadratureKind::Trapezoid, &axis, dim)
    }

    fn tensor(kind: QuadratureKind, axis: &[(f64, f64)], dim: usize) -> Result<Self> {
        let (nodes, weights): (Vec<f64>, Vec<f64>) = match dim {
            1 => axis.iter().copied().unzip(),
            2 => {
                let mut nodes = Vec::with_capacity(2 * axis.len() * axis.len());
                let mut weights = Vec::with_capacity(axis.len() * axis.len());
                for &(a, wa) in axis {
                    for &(b, wb) in axis {
                        nodes.push(a);
                        nodes.push(b);
                        weights.push(wa * wb);
                    }
                }
                (nodes, weights)
            }
            0 => return Err(Error::invalid("dim", "dimension must be >= 1")),
            d => return Err(Error::UnsupportedDimension(d)),
        };
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            kind,
            dim,
            per_axis: axis.len(),
            nodes,
            weights,
            log_weights,
        })
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn check_grid(grid: &QuadratureGrid, anchors: &AnchorSet) -> Result<()> {
    if anchors.dim() > 2 {
        return Err(Error::UnsupportedDimension(anchors.dim()));
    }
    check_len("quadrature grid dimension", anchors.dim(), grid.dim())?;
    if grid.per_axis() < MIN_NODES_PER_AXIS {
        return Err(Error::invalid(
            "grid",
            format!(
                "need at least {MIN_NODES_PER_AXIS} nodes per axis, got {}",
                grid.per_axis()
            ),
        ));
    }
    Ok(())
}

// Per-anchor tilted log-weights `log w_k + f(z_k)/(lambda eps)` and the nodes z_k.
fn tilted<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    i: usize,
    hp: &HyperParams,
    model: &M,
    grid: &QuadratureGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = anchors.point(i);
    let d = x.len();
    let sd = hp.epsilon().sqrt();
    let inv_temp = 1.0 / hp.temperature();
    let mut zs = Vec::with_capacity(grid.len() * d);
    let mut terms = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let start = zs.len();
        zs.extend(grid.node(k).iter().zip(x).map(|(xi, xj)| xj + sd * xi));
        let f = model.value(theta, &zs[start..], i);
        if !f.is_finite() {
            return Err(Error::EvaluationDomain(format!(
                "loss value {f} at quadrature node {k} of anchor {i}"
            )));
        }
        terms.push(grid.log_weights[k] + f * inv_temp);
    }
    Ok((zs, terms))
}

/// `log E_{N(x_i, eps I)}[exp(f(theta, z)/(lambda eps))]`, the log normalizer of
/// the worst-case density of anchor `i` relative to its reference Gaussian.
pub fn worstcase_log_normalizer<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    i: usize,
    hp: &HyperParams,
    model: &M,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_grid(grid, anchors)?;
    anchors.check_index(i)?;
    let (_, terms) = tilted(theta, anchors, i, hp, model, grid)?;
    Ok(log_sum_exp(&terms))
}

/// Log density of the worst-case distribution of anchor `i` at `z`, given its
/// log normalizer from [`worstcase_log_normalizer`].
#[allow(clippy::too_many_arguments)]
pub fn worstcase_log_density<M: LossModel + ?Sized>(
    theta: &[f64],
    z: &[f64],
    anchors: &AnchorSet,
    i: usize,
    hp: &HyperParams,
    model: &M,
    log_normalizer: f64,
) -> f64 {
    let x = anchors.point(i);
    let eps = hp.epsilon();
    let d2 = dist(z, x).powi(2);
    let log_ref = -d2 / (2.0 * eps) - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI * eps).ln();
    model.value(theta, z, i) / hp.temperature() + log_ref - log_normalizer
}

/// Mean and per-coordinate variance of a worst-case distribution on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn worstcase_moments<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    i: usize,
    hp: &HyperParams,
    model: &M,
    grid: &QuadratureGrid,
) -> Result<GridMoments> {
    check_grid(grid, anchors)?;
    anchors.check_index(i)?;
    let d = anchors.dim();
    let (zs, terms) = tilted(theta, anchors, i, hp, model, grid)?;
    let log_z = log_sum_exp(&terms);
    let mut mean = vec![0.0; d];
    let mut second = vec![0.0; d];
    for (k, t) in terms.iter().enumerate() {
        let p = (t - log_z).exp();
        for j in 0..d {
            let z = zs[k * d + j];
            mean[j] += p * z;
            second[j] += p * z * z;
        }
    }
    let variance = mean.iter().zip(&second).map(|(m, s)| s - m * m).collect();
    Ok(GridMoments { mean, variance })
}

/// Dual objective `(lambda eps / n) sum_i log E_{N(x_i, eps I)}[exp(f/(lambda eps))]`.
/// It equals the penalized worst-case risk up to a constant independent of theta.
pub fn dual_objective_quadrature<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_grid(grid, anchors)?;
    check_len("dual_objective theta", model.theta_dim(), theta.len())?;
    let per_anchor: Vec<f64> = (0..anchors.len())
        .into_par_iter()
        .map(|i| tilted(theta, anchors, i, hp, model, grid).map(|(_, t)| log_sum_exp(&t)))
        .collect::<Result<_>>()?;
    let total: f64 = per_anchor.iter().sum();
    Ok(hp.temperature() * total / anchors.len() as f64)
}

/// Hypergradient `(1/n) sum_i E_{mu*_i}[grad_theta f]` with each worst case
/// normalized on the grid.
pub fn true_hypergradient_quadrature<M: LossModel + ?Sized>(
    theta: &[f64],
    anchors: &AnchorSet,
    hp: &HyperParams,
    model: &M,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_grid(grid, anchors)?;
    check_len("hypergradient theta", model.theta_dim(), theta.len())?;
    let dt = theta.len();
    let d = anchors.dim();
    let per_anchor: Vec<Vec<f64>> = (0..anchors.len())
        .into_par_iter()
        .map(|i| {
            let (zs, terms) = tilted(theta, anchors, i, hp, model, grid)?;
            let log_z = log_sum_exp(&terms);
            let mut acc = vec![0.0; dt];
            let mut g = vec![0.0; dt];
            for (k, t) in terms.iter().enumerate() {
                let p = (t - log_z).exp();
                model.grad_theta_into(theta, &zs[k * d..(k + 1) * d], i, &mut g);
                for (a, gj) in acc.iter_mut().zip(&g) {
                    *a += p * gj;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(crate::vecops::mean_of(per_anchor.iter().map(Vec::as_slice), dt))
}

/// `W2` between isotropic Gaussians: `sqrt(|ma - mb|^2 + d (sqrt va - sqrt vb)^2)`.
pub fn gaussian_w2(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    check_len("gaussian_w2", a.dim(), b.dim())?;
    let ds = a.variance_scale.sqrt() - b.variance_scale.sqrt();
    let dm = dist(&a.mean, &b.mean);
    Ok((dm * dm + a.dim() as f64 * ds * ds).sqrt())
}

/// The `m` midpoint quantiles `F^-1((k - 1/2) / m)` of a one-dimensional Gaussian,
/// a deterministic stand-in for an `m`-sample draw in [`empirical_w2_1d`].
pub fn gaussian_quantiles_1d(target: &GaussianDist, m: usize) -> Result<Vec<f64>> {
    check_len("gaussian_quantiles_1d", 1, target.dim())?;
    let normal = Normal::new(target.mean[0], target.variance_scale.sqrt())
        .map_err(|e| Error::invalid("variance_scale", e.to_string()))?;
    Ok((0..m)
        .map(|k| normal.inverse_cdf((k as f64 + 0.5) / m as f64))
        .collect())
}

/// `W2` between two equal-size empirical measures on the line (sorted coupling).
pub fn empirical_w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::invalid("samples", "need at least one sample"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ss: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Estimator variance ceiling `2 sigma^2 + 2 L_f1^2 sqrt(alpha) delta + 2 L_f2^2 delta^2`.
pub fn lemma34_variance_bound(sigma2: f64, l_f1: f64, l_f2: f64, alpha: f64, delta: f64) -> Result<f64> {
    for (name, v) in [
        ("sigma2", sigma2),
        ("L_f1", l_f1),
        ("L_f2", l_f2),
        ("alpha", alpha),
        ("delta", delta),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
        }
    }
    Ok(2.0 * sigma2 + 2.0 * l_f1 * l_f1 * alpha.sqrt() * delta + 2.0 * l_f2 * l_f2 * delta * delta)
}

/// `E|g - E g|^2` of a set of vectors (trace of the sample covariance, divisor `m - 1`).
pub fn total_variance(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least two samples"));
    }
    let dim = samples[0].len();
    let mean = crate::vecops::mean_of(samples.iter().map(Vec::as_slice), dim);
    let ss: f64 = samples.iter().map(|s| dist(s, &mean).powi(2)).sum();
    Ok(ss / (samples.len() - 1) as f64)
}

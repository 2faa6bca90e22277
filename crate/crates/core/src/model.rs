//! Shared mathematical objects: hyperparameters, decisions, anchors and the
//! loss-model interface, plus gradient verification utilities.

use std::io::{Read, Write};
use std::ops::Deref;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::rng::{Domain, RandomStream, Tag};
use crate::vecops::{dist, norm};

/// The penalty weight `lambda` and entropic regularization `epsilon` of the
/// penalized Sinkhorn objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    lambda: f64,
    epsilon: f64,
}

impl HyperParams {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("must be > 0, got {epsilon}")));
        }
        Ok(Self { lambda, epsilon })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The temperature `lambda * epsilon` of the Gibbs worst-case densities.
    pub fn temperature(&self) -> f64 {
        self.lambda * self.epsilon
    }
}

/// Model parameters theta. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision(Vec<f64>);

impl Decision {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(pos) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "theta",
                format!("entry {pos} is not finite ({})", theta[pos]),
            ));
        }
        Ok(Self(theta))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Decision {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// The `n` reference points of the empirical distribution, optionally labeled.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    dim: usize,
    points: Vec<f64>,
    labels: Option<Vec<f64>>,
}

impl AnchorSet {
    pub fn new(points: Vec<Vec<f64>>, labels: Option<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("anchors", "need at least one anchor"));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("anchors", "anchor dimension must be >= 1"));
        }
        let mut flat = Vec::with_capacity(n * dim);
        for p in &points {
            check_len("anchor point", dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("anchors", "anchor coordinates must be finite"));
            }
            flat.extend_from_slice(p);
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LengthMismatch(n, l.len()));
            }
            if l.iter().any(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::invalid("labels", "labels must be -1 or +1"));
            }
        }
        Ok(Self {
            dim,
            points: flat,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }

    /// Componentwise mean of the anchor points.
    pub fn mean(&self) -> Vec<f64> {
        crate::vecops::mean_of(self.points(), self.dim)
    }

    /// Average Euclidean norm of the anchor points.
    pub fn mean_norm(&self) -> f64 {
        self.points().map(norm).sum::<f64>() / self.len() as f64
    }

    /// Write as CSV: header `x_1..x_d[,label]`, 17 significant digits per float.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x_{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|&v| fmt_f64(v)).collect();
            if let Some(l) = &self.labels {
                row.push(format!("{}", l[i] as i64));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let has_label = cols.last() == Some(&"label");
        let dim = cols.len() - usize::from(has_label);
        for (j, c) in cols.iter().take(dim).enumerate() {
            if *c != format!("x_{}", j + 1) {
                return Err(Error::Format(format!("unexpected anchor column `{c}`")));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec.iter().take(dim).map(parse_f64).collect::<Result<Vec<_>>>()?;
            points.push(row);
            if has_label {
                labels.push(parse_f64(&rec[dim])?);
            }
        }
        Self::new(points, has_label.then_some(labels))
    }
}

/// Float formatting used by every CSV writer: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Format(format!("bad float `{s}`: {e}")))
}

/// Declared regularity constants of a loss.
///
/// `l_f1` bounds `|grad_theta f|`; `l_f2` is a common Lipschitz constant for
/// both partial gradients, in both arguments. Either may be unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Lipschitz {
    pub l_f1: Option<f64>,
    pub l_f2: Option<f64>,
}

/// A loss family `f_theta(z)` with analytic partial gradients.
///
/// `anchor` is the index of the anchor that `z` was sampled around; losses that
/// carry per-anchor labels use it, the others ignore it. Implementations must be
/// pure so they can be evaluated from many threads at once.
pub trait LossModel: Send + Sync {
    fn theta_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn value(&self, theta: &[f64], z: &[f64], anchor: usize) -> f64;
    fn grad_theta_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]);
    fn grad_z_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]);

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::default()
    }

    fn grad_theta(&self, theta: &[f64], z: &[f64], anchor: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.theta_dim()];
        self.grad_theta_into(theta, z, anchor, &mut out);
        out
    }

    fn grad_z(&self, theta: &[f64], z: &[f64], anchor: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim()];
        self.grad_z_into(theta, z, anchor, &mut out);
        out
    }
}

impl<T: LossModel + ?Sized> LossModel for Box<T> {
    fn theta_dim(&self) -> usize {
        (**self).theta_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn value(&self, theta: &[f64], z: &[f64], anchor: usize) -> f64 {
        (**self).value(theta, z, anchor)
    }
    fn grad_theta_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]) {
        (**self).grad_theta_into(theta, z, anchor, out)
    }
    fn grad_z_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]) {
        (**self).grad_z_into(theta, z, anchor, out)
    }
    fn lipschitz(&self) -> Lipschitz {
        (**self).lipschitz()
    }
}

/// Result of comparing analytic gradients with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReport {
    pub max_rel_err_theta: f64,
    pub max_rel_err_z: f64,
}

impl GradientReport {
    pub fn max(&self) -> f64 {
        self.max_rel_err_theta.max(self.max_rel_err_z)
    }
}

// Relative error with a small floor on the scale so that components which are
// zero analytically compare absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare `grad_theta` and `grad_z` against coordinate-wise central
/// differences of `value` with step `h`.
pub fn check_gradients<M: LossModel + ?Sized>(
    model: &M,
    theta: &[f64],
    z: &[f64],
    anchor: usize,
    h: f64,
) -> Result<GradientReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "finite-difference step must be > 0"));
    }
    check_len("check_gradients theta", model.theta_dim(), theta.len())?;
    check_len("check_gradients z", model.input_dim(), z.len())?;
    let f0 = model.value(theta, z, anchor);
    if !f0.is_finite() {
        return Err(Error::EvaluationDomain(format!("loss value {f0} at gradient probe")));
    }
    let eval = |t: &[f64], x: &[f64]| -> Result<f64> {
        let v = model.value(t, x, anchor);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvaluationDomain(format!("loss value {v} near probe")))
        }
    };

    let g_theta = model.grad_theta(theta, z, anchor);
    let mut probe = theta.to_vec();
    let mut max_theta = 0.0f64;
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = eval(&probe, z)?;
        probe[j] = theta[j] - h;
        let down = eval(&probe, z)?;
        probe[j] = theta[j];
        max_theta = max_theta.max(rel_err(g_theta[j], (up - down) / (2.0 * h)));
    }

    let g_z = model.grad_z(theta, z, anchor);
    let mut probe = z.to_vec();
    let mut max_z = 0.0f64;
    for j in 0..z.len() {
        probe[j] = z[j] + h;
        let up = eval(theta, &probe)?;
        probe[j] = z[j] - h;
        let down = eval(theta, &probe)?;
        probe[j] = z[j];
        max_z = max_z.max(rel_err(g_z[j], (up - down) / (2.0 * h)));
    }

    Ok(GradientReport {
        max_rel_err_theta: max_theta,
        max_rel_err_z: max_z,
    })
}

/// Region sampled by [`smoothness_probe`]: theta and z uniform in balls
/// centred at the origin, anchor index uniform in `0..anchors`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRegion {
    pub theta_radius: f64,
    pub z_radius: f64,
    pub anchors: usize,
}

impl Default for ProbeRegion {
    fn default() -> Self {
        Self {
            theta_radius: 1.0,
            z_radius: 1.0,
            anchors: 1,
        }
    }
}

/// Empirical lower bounds on the declared Lipschitz constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessEstimate {
    pub l_f1_hat: f64,
    pub l_f2_hat: f64,
}

pub(crate) fn uniform_in_ball(stream: &RandomStream, tag: Tag, dim: usize, radius: f64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream.rng(tag);
    let mut v: Vec<f64> = (0..dim)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let r = norm(&v);
    let u: f64 = rng.random::<f64>();
    let scale = if r > 0.0 {
        radius * u.powf(1.0 / dim as f64) / r
    } else {
        0.0
    };
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Estimate `L_f1` and `L_f2` from `pair_count` random probe pairs.
///
/// Each pair contributes gradient-difference ratios for both partial gradients
/// under a change of `z` at fixed theta and under a change of theta at fixed `z`.
/// Coincident pairs are skipped.
pub fn smoothness_probe<M: LossModel + ?Sized>(
    model: &M,
    pair_count: usize,
    region: ProbeRegion,
    stream: &RandomStream,
) -> Result<SmoothnessEstimate> {
    if pair_count < 2 {
        return Err(Error::invalid("pair_count", "need at least 2 probe pairs"));
    }
    let dt = model.theta_dim();
    let dz = model.input_dim();
    let anchors = region.anchors.max(1);
    let per_pair: Vec<(f64, Option<f64>)> = (0..pair_count as u64)
        .into_par_iter()
        .map(|p| {
            let ta = uniform_in_ball(stream, Tag::new(Domain::Probe, 0, p, 0), dt, region.theta_radius);
            let tb = uniform_in_ball(stream, Tag::new(Domain::Probe, 1, p, 0), dt, region.theta_radius);
            let za = uniform_in_ball(stream, Tag::new(Domain::Probe, 2, p, 0), dz, region.z_radius);
            let zb = uniform_in_ball(stream, Tag::new(Domain::Probe, 3, p, 0), dz, region.z_radius);
            let anchor = stream.uniform_index(Tag::new(Domain::Probe, 4, p, 0), anchors);

            let gt_aa = model.grad_theta(&ta, &za, anchor);
            let gt_ab = model.grad_theta(&ta, &zb, anchor);
            let gt_ba = model.grad_theta(&tb, &za, anchor);
            let gz_aa = model.grad_z(&ta, &za, anchor);
            let gz_ab = model.grad_z(&ta, &zb, anchor);
            let gz_ba = model.grad_z(&tb, &za, anchor);

            let l1 = norm(&gt_aa).max(norm(&gt_ab)).max(norm(&gt_ba));
            let mut l2: Option<f64> = None;
            let dzab = dist(&za, &zb);
            if dzab > 0.0 {
                let r = (dist(&gt_aa, &gt_ab) / dzab).max(dist(&gz_aa, &gz_ab) / dzab);
                l2 = Some(l2.map_or(r, |v: f64| v.max(r)));
            }
            let dtab = dist(&ta, &tb);
            if dtab > 0.0 {
                let r = (dist(&gt_aa, &gt_ba) / dtab).max(dist(&gz_aa, &gz_ba) / dtab);
                l2 = Some(l2.map_or(r, |v: f64| v.max(r)));
            }
            (l1, l2)
        })
        .collect();

    let l_f1_hat = per_pair.iter().map(|p| p.0).fold(0.0, f64::max);
    let ratios: Vec<f64> = per_pair.iter().filter_map(|p| p.1).collect();
    if ratios.is_empty() {
        return Err(Error::Degenerate("all probe pairs were coincident".into()));
    }
    let l_f2_hat = ratios.into_iter().fold(0.0, f64::max);
    Ok(SmoothnessEstimate { l_f1_hat, l_f2_hat })
}

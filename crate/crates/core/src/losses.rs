//! Concrete loss models with hand-derived gradients.
//!
//! [`LinearLoss`] and [`QuadraticLoss`] make the worst-case densities Gaussian
//! and are used against the closed-form oracles. The binary cross-entropy
//! losses ([`LogisticLoss`], [`ShallowNetLoss`]) bind each anchor's label and
//! only ever perturb the features.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnchorSet, Decision, HyperParams, Lipschitz, LossModel};
use crate::rng::{Domain, RandomStream, Tag};
use crate::vecops::{dot, sigmoid, softplus};

/// `f(theta, z) = theta . z` with `theta` and `z` of equal dimension.
#[derive(Clone, Debug)]
pub struct LinearLoss {
    dim: usize,
}

impl LinearLoss {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LossModel for LinearLoss {
    fn theta_dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn value(&self, theta: &[f64], z: &[f64], _anchor: usize) -> f64 {
        dot(theta, z)
    }
    #[inline]
    fn grad_theta_into(&self, _theta: &[f64], z: &[f64], _anchor: usize, out: &mut [f64]) {
        out.iter_mut().zip(z).for_each(|(o, v)| *o = *v);
    }
    #[inline]
    fn grad_z_into(&self, theta: &[f64], _z: &[f64], _anchor: usize, out: &mut [f64]) {
        out.iter_mut().zip(theta).for_each(|(o, v)| *o = *v);
    }
    fn lipschitz(&self) -> Lipschitz {
        // grad_theta = z is 1-Lipschitz in z, grad_z = theta is 1-Lipschitz in theta.
        Lipschitz {
            l_f1: None,
            l_f2: Some(1.0),
        }
    }
}

/// `f(theta, z) = (c/2)|z|^2`, independent of theta. Requires `c < lambda` so
/// that the worst-case density is normalizable.
#[derive(Clone, Debug)]
pub struct QuadraticLoss {
    c: f64,
    dim: usize,
    theta_dim: usize,
}

impl QuadraticLoss {
    pub fn new(c: f64, dim: usize, hp: &HyperParams) -> Result<Self> {
        if !c.is_finite() || c >= hp.lambda() {
            return Err(Error::invalid(
                "c",
                format!("c must be < lambda (c = {c}, lambda = {})", hp.lambda()),
            ));
        }
        Ok(Self { c, dim, theta_dim: 1 })
    }

    pub fn curvature(&self) -> f64 {
        self.c
    }
}

impl LossModel for QuadraticLoss {
    fn theta_dim(&self) -> usize {
        self.theta_dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn value(&self, _theta: &[f64], z: &[f64], _anchor: usize) -> f64 {
        0.5 * self.c * dot(z, z)
    }
    #[inline]
    fn grad_theta_into(&self, _theta: &[f64], _z: &[f64], _anchor: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
    #[inline]
    fn grad_z_into(&self, _theta: &[f64], z: &[f64], _anchor: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(z) {
            *o = self.c * v;
        }
    }
    fn lipschitz(&self) -> Lipschitz {
        Lipschitz {
            l_f1: Some(0.0),
            l_f2: Some(self.c.abs()),
        }
    }
}

/// A real-valued score `s(theta, x)` whose sign is the predicted label.
pub trait Classifier: Send + Sync {
    fn theta_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn logit(&self, theta: &[f64], x: &[f64]) -> f64;
    /// Writes `ds/dtheta` into `out` and returns `s`.
    fn logit_grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64;
    /// Writes `ds/dx` into `out` and returns `s`.
    fn logit_grad_input(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64;
}

/// Linear score `theta . x` (no intercept).
#[derive(Clone, Debug)]
pub struct LinearLogit {
    dim: usize,
}

impl LinearLogit {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Classifier for LinearLogit {
    fn theta_dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn logit(&self, theta: &[f64], x: &[f64]) -> f64 {
        dot(theta, x)
    }
    #[inline]
    fn logit_grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        out.copy_from_slice(x);
        dot(theta, x)
    }
    #[inline]
    fn logit_grad_input(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        out.copy_from_slice(theta);
        dot(theta, x)
    }
}

/// One-hidden-layer tanh network `w . tanh(W x + b) + b0`.
///
/// Parameter layout: `W` row-major (`H x d`), then `b` (`H`), `w` (`H`), `b0`.
#[derive(Clone, Debug)]
pub struct TanhNet {
    dim: usize,
    hidden: usize,
}

impl TanhNet {
    pub fn new(dim: usize, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden_width", "must be >= 1"));
        }
        Ok(Self { dim, hidden })
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], f64) {
        let hd = self.hidden * self.dim;
        let (w_in, rest) = theta.split_at(hd);
        let (b, rest) = rest.split_at(self.hidden);
        let (w_out, rest) = rest.split_at(self.hidden);
        (w_in, b, w_out, rest[0])
    }

    // Hidden activations tanh(W x + b).
    fn activations(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (w_in, b, _, _) = self.split(theta);
        w_in.chunks_exact(self.dim)
            .zip(b)
            .map(|(row, bh)| (dot(row, x) + bh).tanh())
            .collect()
    }
}

impl Classifier for TanhNet {
    fn theta_dim(&self) -> usize {
        self.hidden * self.dim + 2 * self.hidden + 1
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn logit(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (_, _, w_out, b0) = self.split(theta);
        dot(w_out, &self.activations(theta, x)) + b0
    }
    #[inline]
    fn logit_grad_theta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        let (_, _, w_out, b0) = self.split(theta);
        let t = self.activations(theta, x);
        let hd = self.hidden * self.dim;
        let (g_w_in, rest) = out.split_at_mut(hd);
        let (g_b, rest) = rest.split_at_mut(self.hidden);
        let (g_w_out, g_b0) = rest.split_at_mut(self.hidden);
        for h in 0..self.hidden {
            let back = w_out[h] * (1.0 - t[h] * t[h]);
            g_b[h] = back;
            g_w_out[h] = t[h];
            for (g, xj) in g_w_in[h * self.dim..(h + 1) * self.dim].iter_mut().zip(x) {
                *g = back * xj;
            }
        }
        g_b0[0] = 1.0;
        dot(w_out, &t) + b0
    }
    #[inline]
    fn logit_grad_input(&self, theta: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        let (w_in, _, w_out, b0) = self.split(theta);
        let t = self.activations(theta, x);
        out.fill(0.0);
        for (h, row) in w_in.chunks_exact(self.dim).enumerate() {
            let back = w_out[h] * (1.0 - t[h] * t[h]);
            for (o, wj) in out.iter_mut().zip(row) {
                *o += back * wj;
            }
        }
        dot(w_out, &t) + b0
    }
}

/// Binary cross-entropy `log(1 + exp(-y s(theta, z)))` with `y` the label of the
/// anchor that `z` belongs to.
#[derive(Clone, Debug)]
pub struct CrossEntropy<C> {
    classifier: C,
    labels: Arc<[f64]>,
    lipschitz: Lipschitz,
}

pub type LogisticLoss = CrossEntropy<LinearLogit>;
pub type ShallowNetLoss = CrossEntropy<TanhNet>;

impl<C: Classifier> CrossEntropy<C> {
    pub fn new(classifier: C, labels: &[f64]) -> Result<Self> {
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("labels", "labels must be -1 or +1"));
        }
        Ok(Self {
            classifier,
            labels: labels.into(),
            lipschitz: Lipschitz::default(),
        })
    }

    pub fn classifier(&self) -> &C {
        &self.classifier
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// The same loss bound to another label sequence (e.g. the test split).
    pub fn relabel(&self, labels: &[f64]) -> Result<Self>
    where
        C: Clone,
    {
        let mut out = Self::new(self.classifier.clone(), labels)?;
        out.lipschitz = self.lipschitz;
        Ok(out)
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    #[inline]
    fn label(&self, anchor: usize) -> f64 {
        self.labels[anchor]
    }
}

impl LogisticLoss {
    pub fn logistic(anchors: &AnchorSet) -> Result<Self> {
        let labels = anchors.labels().ok_or(Error::MissingLabels("logistic loss"))?;
        Self::new(LinearLogit::new(anchors.dim()), labels)
    }

    /// Declare regularity constants valid for `|theta| <= theta_radius`,
    /// `|z| <= z_radius`. With `s = sigmoid(-y theta.z)` in (0,1):
    /// `|grad_theta f| <= |z|`; the Jacobians of both partial gradients are
    /// bounded by `max(1 + |theta||z|/4, |z|^2/4, |theta|^2/4)`.
    pub fn with_region(self, theta_radius: f64, z_radius: f64) -> Self {
        let cross = 1.0 + theta_radius * z_radius / 4.0;
        let l_f2 = cross
            .max(z_radius * z_radius / 4.0)
            .max(theta_radius * theta_radius / 4.0);
        self.with_lipschitz(Lipschitz {
            l_f1: Some(z_radius),
            l_f2: Some(l_f2),
        })
    }
}

impl ShallowNetLoss {
    pub fn shallow_net(anchors: &AnchorSet, hidden: usize) -> Result<Self> {
        let labels = anchors.labels().ok_or(Error::MissingLabels("shallow-net loss"))?;
        Self::new(TanhNet::new(anchors.dim(), hidden)?, labels)
    }
}

impl<C: Classifier> LossModel for CrossEntropy<C> {
    fn theta_dim(&self) -> usize {
        self.classifier.theta_dim()
    }
    fn input_dim(&self) -> usize {
        self.classifier.input_dim()
    }
    #[inline]
    fn value(&self, theta: &[f64], z: &[f64], anchor: usize) -> f64 {
        softplus(-self.label(anchor) * self.classifier.logit(theta, z))
    }
    #[inline]
    fn grad_theta_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]) {
        let y = self.label(anchor);
        let s = self.classifier.logit_grad_theta(theta, z, out);
        let scale = -y * sigmoid(-y * s);
        out.iter_mut().for_each(|g| *g *= scale);
    }
    #[inline]
    fn grad_z_into(&self, theta: &[f64], z: &[f64], anchor: usize, out: &mut [f64]) {
        let y = self.label(anchor);
        let s = self.classifier.logit_grad_input(theta, z, out);
        let scale = -y * sigmoid(-y * s);
        out.iter_mut().for_each(|g| *g *= scale);
    }
    fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }
}

/// Loss selection as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Linear,
    Quadratic { c: f64 },
    Logistic,
    ShallowNet { hidden: usize },
}

/// Build the loss for `spec`, bound to the labels of `anchors` where relevant.
pub fn make_loss(spec: &LossSpec, anchors: &AnchorSet, hp: &HyperParams) -> Result<Box<dyn LossModel>> {
    Ok(match spec {
        LossSpec::Linear => Box::new(LinearLoss::new(anchors.dim())),
        LossSpec::Quadratic { c } => Box::new(QuadraticLoss::new(*c, anchors.dim(), hp)?),
        LossSpec::Logistic => Box::new(LogisticLoss::logistic(anchors)?),
        LossSpec::ShallowNet { hidden } => Box::new(ShallowNetLoss::shallow_net(anchors, *hidden)?),
    })
}

/// A labeled classification loss plus the classifier behind it.
pub enum ClassifierLoss {
    Logistic(LogisticLoss),
    ShallowNet(ShallowNetLoss),
}

impl ClassifierLoss {
    pub fn from_spec(spec: &LossSpec, anchors: &AnchorSet) -> Result<Self> {
        match spec {
            LossSpec::Logistic => Ok(Self::Logistic(LogisticLoss::logistic(anchors)?)),
            LossSpec::ShallowNet { hidden } => Ok(Self::ShallowNet(ShallowNetLoss::shallow_net(anchors, *hidden)?)),
            other => Err(Error::Config(format!(
                "classification experiments need a logistic or shallow_net loss, got {other:?}"
            ))),
        }
    }

    pub fn loss(&self) -> &dyn LossModel {
        match self {
            Self::Logistic(l) => l,
            Self::ShallowNet(l) => l,
        }
    }

    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            Self::Logistic(l) => l.classifier(),
            Self::ShallowNet(l) => l.classifier(),
        }
    }
}

/// Starting decision for training: zeros for linear models, a small seeded
/// Gaussian draw for the network (zeros are a saddle of the tanh network).
pub fn initial_theta(spec: &LossSpec, input_dim: usize, stream: &RandomStream) -> Decision {
    match spec {
        LossSpec::Linear | LossSpec::Logistic => Decision::zeros(input_dim),
        LossSpec::Quadratic { .. } => Decision::zeros(1),
        LossSpec::ShallowNet { hidden } => {
            let h = *hidden;
            let mut theta = vec![0.0; h * input_dim + 2 * h + 1];
            let w_in = stream.normal_vec(Tag::new(Domain::ThetaInit, 0, 0, 0), h * input_dim);
            let w_out = stream.normal_vec(Tag::new(Domain::ThetaInit, 1, 0, 0), h);
            let s_in = 1.0 / (input_dim as f64).sqrt();
            let s_out = 1.0 / (h as f64).sqrt();
            for (t, g) in theta[..h * input_dim].iter_mut().zip(&w_in) {
                *t = s_in * g;
            }
            for (t, g) in theta[h * input_dim + h..h * input_dim + 2 * h].iter_mut().zip(&w_out) {
                *t = s_out * g;
            }
            Decision::new(theta).expect("Gaussian draws are finite")
        }
    }
}

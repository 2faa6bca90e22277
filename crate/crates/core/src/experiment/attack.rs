//! White-box l2 projected-gradient attacks and robustness curves.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::config::AttackSpec;
use crate::losses::Classifier;
use crate::model::{fmt_f64, AnchorSet, LossModel};
use crate::vecops::{dist, norm};

/// Ascend the loss at test point `anchor_index` (whose label the loss is bound
/// to) by normalized gradient steps of length `step_size`, projecting back
/// onto the l2 ball of `radius` around `point` after each step.
pub fn pgd_attack<M: LossModel + ?Sized>(
    theta: &[f64],
    point: &[f64],
    anchor_index: usize,
    model: &M,
    radius: f64,
    steps: usize,
    step_size: f64,
) -> Vec<f64> {
    let mut z = point.to_vec();
    if radius <= 0.0 {
        return z;
    }
    let mut g = vec![0.0; z.len()];
    for _ in 0..steps {
        model.grad_z_into(theta, &z, anchor_index, &mut g);
        let gn = norm(&g);
        if !(gn > 0.0 && gn.is_finite()) {
            break;
        }
        for (zj, gj) in z.iter_mut().zip(&g) {
            *zj += step_size * gj / gn;
        }
        let r = dist(&z, point);
        if r > radius {
            let shrink = radius / r;
            for (zj, xj) in z.iter_mut().zip(point) {
                *zj = xj + (*zj - xj) * shrink;
            }
        }
    }
    z
}

/// `+1` when the score is nonnegative.
pub fn predict(classifier: &dyn Classifier, theta: &[f64], x: &[f64]) -> f64 {
    if classifier.logit(theta, x) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn accuracy(classifier: &dyn Classifier, theta: &[f64], data: &AnchorSet) -> f64 {
    let labels = data.labels().expect("accuracy needs labeled data");
    let hits = (0..data.len())
        .filter(|&i| predict(classifier, theta, data.point(i)) == labels[i])
        .count();
    hits as f64 / data.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    /// Radius as a fraction of the mean test-feature norm.
    pub radius_fraction: f64,
    pub radius: f64,
    pub misclassification_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub solver: String,
    pub clean_accuracy: f64,
    pub rows: Vec<RadiusRow>,
    /// Only ever filled in for JSON summaries; never written to CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RobustnessReport {
    pub const CSV_HEADER: [&'static str; 4] = ["solver", "radius_fraction", "radius", "misclassification_rate"];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                self.solver.clone(),
                fmt_f64(r.radius_fraction),
                fmt_f64(r.radius),
                fmt_f64(r.misclassification_rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rate_at(&self, radius_fraction: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.radius_fraction == radius_fraction)
            .map(|r| r.misclassification_rate)
    }
}

/// Attack every test point at every radius and report misclassification
/// rates. `model` must be the loss bound to the labels of `test`.
pub fn evaluate_robust_accuracy<M: LossModel + ?Sized>(
    theta: &[f64],
    test: &AnchorSet,
    model: &M,
    classifier: &dyn Classifier,
    attack: &AttackSpec,
    solver: &str,
) -> RobustnessReport {
    let labels = test.labels().expect("robustness evaluation needs labeled data");
    let scale = test.mean_norm();
    let rows = attack
        .radii
        .iter()
        .map(|&fraction| {
            let radius = fraction * scale;
            let step = attack.step_size * radius;
            let wrong: Vec<bool> = (0..test.len())
                .into_par_iter()
                .map(|i| {
                    let adv = pgd_attack(theta, test.point(i), i, model, radius, attack.steps, step);
                    predict(classifier, theta, &adv) != labels[i]
                })
                .collect();
            RadiusRow {
                radius_fraction: fraction,
                radius,
                misclassification_rate: wrong.iter().filter(|&&w| w).count() as f64 / test.len() as f64,
            }
        })
        .collect();
    RobustnessReport {
        solver: solver.to_string(),
        clean_accuracy: accuracy(classifier, theta, test),
        rows,
        wall_clock_seconds: None,
    }
}

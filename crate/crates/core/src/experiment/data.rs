//! Synthetic binary classification data.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::Result;
use crate::experiment::config::{DatasetKind, DatasetSpec};
use crate::model::AnchorSet;
use crate::rng::{Domain, RandomStream, Tag};

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: AnchorSet,
    pub test: AnchorSet,
}

const TRAIN: u64 = 0;
const TEST: u64 = 1;

/// Draw labeled train and test sets. Classes alternate `+1, -1`; the two
/// splits use disjoint stream tags.
///
/// `gauss_blobs` centers the classes at `+-separation/2` along the first axis
/// with isotropic noise of standard deviation `noise`. `two_moons` places the
/// interleaving half circles in the first two coordinates, offset vertically
/// by `separation`, with `noise` on every coordinate.
pub fn generate_synthetic_dataset(spec: &DatasetSpec, stream: &RandomStream) -> Result<Split> {
    Ok(Split {
        train: draw(spec, spec.n_per_class, TRAIN, stream)?,
        test: draw(spec, spec.test_per_class(), TEST, stream)?,
    })
}

fn draw(spec: &DatasetSpec, per_class: usize, split: u64, stream: &RandomStream) -> Result<AnchorSet> {
    let mut points = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for j in 0..2 * per_class {
        let y = if j % 2 == 0 { 1.0 } else { -1.0 };
        let tag = Tag::new(Domain::Dataset, split, j as u64, 0);
        let mut x = stream.normal_vec(tag, spec.d);
        x.iter_mut().for_each(|v| *v *= spec.noise);
        match spec.kind {
            DatasetKind::GaussBlobs => x[0] += y * spec.separation / 2.0,
            DatasetKind::TwoMoons => {
                let t = PI
                    * stream
                        .rng(Tag::new(Domain::Dataset, split, j as u64, 1))
                        .random::<f64>();
                let (cx, cy) = if y > 0.0 {
                    (t.cos() - 0.5, t.sin() - 0.25 + spec.separation / 2.0)
                } else {
                    (0.5 - t.cos(), 0.25 - t.sin() - spec.separation / 2.0)
                };
                x[0] += cx;
                x[1] += cy;
            }
        }
        points.push(x);
        labels.push(y);
    }
    AnchorSet::new(points, Some(labels))
}

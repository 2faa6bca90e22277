//! Sinkhorn distributionally robust optimization: Langevin samplers for the
//! worst-case distributions, double-loop and single-loop solvers for the
//! penalized dual, quadrature oracles and an experiment harness.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod double_loop;
pub mod error;
pub mod experiment;
pub mod langevin;
pub mod losses;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod single_loop;
pub mod trace;
mod vecops;

pub use error::{Error, Result};
pub use model::{AnchorSet, Decision, HyperParams, LossModel};
pub use rng::RandomStream;

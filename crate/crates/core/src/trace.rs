//! Per-iteration solver records and their CSV form.

use std::io::Write;

use crate::error::Result;
use crate::model::fmt_f64;

/// Momentum diagnostics of one single-loop iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumRecord {
    pub r_norm: f64,
    pub v_norm: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// 1-based iteration; the record describes `theta_k` after the update.
    pub k: usize,
    pub grad_est_norm: f64,
    /// Sampled anchor (double loop) or first sampled batch anchor (single loop).
    pub anchor_index: usize,
    pub momentum: Option<MomentumRecord>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    /// Iterate returned as the uniformly selected output.
    pub theta_hat: Vec<f64>,
    /// 1-based index of `theta_hat` among the recorded iterates.
    pub selected: usize,
}

impl SolverTrace {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            records: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    /// CSV with columns `k, grad_est_norm, anchor_index`, then
    /// `r_norm, v_norm, batch_size` for momentum solvers, then `theta_0..` when
    /// full iterates were logged.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let momentum = self.records.first().is_some_and(|r| r.momentum.is_some());
        let theta_dim = self.records.first().and_then(|r| r.theta.as_ref()).map_or(0, Vec::len);
        let mut header: Vec<String> = vec!["k".into(), "grad_est_norm".into(), "anchor_index".into()];
        if momentum {
            header.extend(["r_norm".into(), "v_norm".into(), "batch_size".into()]);
        }
        header.extend((0..theta_dim).map(|j| format!("theta_{j}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), fmt_f64(r.grad_est_norm), r.anchor_index.to_string()];
            if let Some(m) = &r.momentum {
                row.extend([fmt_f64(m.r_norm), fmt_f64(m.v_norm), m.batch_size.to_string()]);
            }
            if let Some(t) = &r.theta {
                row.extend(t.iter().map(|&v| fmt_f64(v)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

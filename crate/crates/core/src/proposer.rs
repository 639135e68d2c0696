//! Level-set interval proposals from per-frame confidences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::runs;
pub use crate::interval::Interval;

pub const DECILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProposalError {
    #[error("confidence vector is empty")]
    EmptyInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    /// Sorted by (start, end), no duplicates.
    pub proposals: Vec<Interval>,
    pub thresholds_used: Vec<f64>,
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn decile_thresholds(conf: &[f64]) -> Result<Vec<f64>, ProposalError> {
    if conf.is_empty() {
        return Err(ProposalError::EmptyInput);
    }
    let mut sorted = conf.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DECILES.iter().map(|&q| quantile_sorted(&sorted, q)).collect())
}

/// Maximal runs with `conf > threshold`, at least `min_len` frames long.
pub fn level_set_intervals(conf: &[f64], threshold: f64, min_len: usize) -> Vec<Interval> {
    runs(conf.iter().map(|&c| c > threshold), min_len.max(1))
}

pub fn propose(conf: &[f64], min_len: usize) -> Result<ProposalSet, ProposalError> {
    let thresholds = decile_thresholds(conf)?;
    let mut pooled = BTreeSet::new();
    for &t in &thresholds {
        pooled.extend(level_set_intervals(conf, t, min_len));
    }
    Ok(ProposalSet {
        proposals: pooled.into_iter().collect(),
        thresholds_used: thresholds,
    })
}

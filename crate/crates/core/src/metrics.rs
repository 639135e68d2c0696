//! Evaluation protocol: frame F1, interval precision/recall under the
//! boundary (more-than-half overlap) and presence (any overlap) rules, and
//! start-point F1 as a function of the tolerance window.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::runs;
pub use crate::interval::{InconsistentSet, Interval, IntervalSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("prediction has {pred} frames, ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error(transparent)]
    InconsistentSet(#[from] InconsistentSet),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    pub fn new(precision: f64, recall: f64) -> Self {
        PrecisionRecall {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    /// Component-wise mean; `f1` is the mean of the per-item F1 values.
    pub fn average(items: &[PrecisionRecall]) -> PrecisionRecall {
        if items.is_empty() {
            return PrecisionRecall::default();
        }
        let n = items.len() as f64;
        PrecisionRecall {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
        }
    }
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn frame_f1(pred: &[bool], gt: &[bool]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Fraction of `items` that `hit` accepts against some member of `others`,
/// with the empty-set conventions: 1 when both are empty, 0 when only
/// `items` is empty.
fn matched_fraction<F>(items: &IntervalSet, others: &IntervalSet, hit: F) -> f64
where
    F: Fn(&Interval, &Interval) -> bool,
{
    if items.is_empty() {
        return if others.is_empty() { 1.0 } else { 0.0 };
    }
    let matched = items.iter().filter(|a| others.iter().any(|b| hit(a, b))).count();
    matched as f64 / items.len() as f64
}

/// Boundary agreement: a prediction counts when more than half of it lies in
/// one ground-truth interval; a ground-truth interval counts when more than
/// half of it is covered by one prediction.
pub fn interval_precision_recall(pred: &IntervalSet, gt: &IntervalSet) -> PrecisionRecall {
    let precision = matched_fraction(pred, gt, |p, g| 2 * p.overlap(g) > p.len());
    let recall = matched_fraction(gt, pred, |g, p| 2 * p.overlap(g) > g.len());
    PrecisionRecall::new(precision, recall)
}

/// Presence agreement: any shared frame counts.
pub fn presence_precision_recall(pred: &IntervalSet, gt: &IntervalSet) -> PrecisionRecall {
    let precision = matched_fraction(pred, gt, |p, g| p.overlaps(g));
    let recall = matched_fraction(gt, pred, |g, p| p.overlaps(g));
    PrecisionRecall::new(precision, recall)
}

/// Size of a maximum one-to-one matching with `|p - g| <= tolerance`.
///
/// On a line the compatibility graph is an interval order, so a two-pointer
/// sweep over both sorted lists matching the leftmost compatible pair is
/// optimal.
pub fn startpoint_matches(pred: &[usize], gt: &[usize], tolerance: usize) -> usize {
    let mut p = pred.to_vec();
    let mut g = gt.to_vec();
    p.sort_unstable();
    g.sort_unstable();
    let (mut i, mut j, mut m) = (0, 0, 0);
    while i < p.len() && j < g.len() {
        if p[i].abs_diff(g[j]) <= tolerance {
            m += 1;
            i += 1;
            j += 1;
        } else if p[i] < g[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    m
}

/// Start-point F1 with a tolerance in seconds on an `eval_hz` grid.
pub fn startpoint_f1(pred: &[usize], gt: &[usize], tolerance_sec: f64, eval_hz: f64) -> f64 {
    let tol = (tolerance_sec * eval_hz + 1e-9).floor().max(0.0) as usize;
    let m = startpoint_matches(pred, gt, tol) as f64;
    let precision = if pred.is_empty() {
        if gt.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        m / pred.len() as f64
    };
    let recall = if gt.is_empty() {
        if pred.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        m / gt.len() as f64
    };
    f1(precision, recall)
}

pub fn frames_to_intervals(mask: &[bool], min_len: usize) -> IntervalSet {
    IntervalSet::new(runs(mask.iter().copied(), min_len.max(1))).expect("runs are disjoint")
}

pub const DEFAULT_TOLERANCES: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tolerance_sec: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frame_f1: f64,
    pub boundary: PrecisionRecall,
    pub presence: PrecisionRecall,
    pub startpoint_curve: Vec<CurvePoint>,
}

impl MetricReport {
    /// Scores one video. Frame masks are taken over `0..video_len`.
    pub fn evaluate(
        pred: &IntervalSet,
        gt: &IntervalSet,
        video_len: usize,
        tolerances_sec: &[f64],
        eval_hz: f64,
    ) -> MetricReport {
        Self::evaluate_with_starts(pred, gt, &pred.starts(), video_len, tolerances_sec, eval_hz)
    }

    /// As [`MetricReport::evaluate`], with start points supplied separately
    /// (e.g. streaming onsets).
    pub fn evaluate_with_starts(
        pred: &IntervalSet,
        gt: &IntervalSet,
        pred_starts: &[usize],
        video_len: usize,
        tolerances_sec: &[f64],
        eval_hz: f64,
    ) -> MetricReport {
        let gt_starts = gt.starts();
        MetricReport {
            frame_f1: frame_f1(&pred.to_frames(video_len), &gt.to_frames(video_len)).unwrap(),
            boundary: interval_precision_recall(pred, gt),
            presence: presence_precision_recall(pred, gt),
            startpoint_curve: tolerances_sec
                .iter()
                .map(|&t| CurvePoint {
                    tolerance_sec: t,
                    f1: startpoint_f1(pred_starts, &gt_starts, t, eval_hz),
                })
                .collect(),
        }
    }

    /// Mean over reports with matching tolerance grids.
    pub fn average(reports: &[MetricReport]) -> MetricReport {
        let n = reports.len().max(1) as f64;
        let curve = reports.first().map_or_else(Vec::new, |r| {
            r.startpoint_curve
                .iter()
                .enumerate()
                .map(|(k, p)| CurvePoint {
                    tolerance_sec: p.tolerance_sec,
                    f1: reports.iter().map(|r| r.startpoint_curve[k].f1).sum::<f64>() / n,
                })
                .collect()
        });
        MetricReport {
            frame_f1: reports.iter().map(|r| r.frame_f1).sum::<f64>() / n,
            boundary: PrecisionRecall::average(&reports.iter().map(|r| r.boundary).collect::<Vec<_>>()),
            presence: PrecisionRecall::average(&reports.iter().map(|r| r.presence).collect::<Vec<_>>()),
            startpoint_curve: curve,
        }
    }

    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tolerance_sec,f1")?;
        for p in &self.startpoint_curve {
            writeln!(w, "{},{}", p.tolerance_sec, p.f1)?;
        }
        Ok(())
    }
}

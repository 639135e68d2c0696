//! Consensus ground truth from per-annotator interval marks.
//!
//! Marks arrive per worker and per chunk, are shifted onto the video's
//! evaluation grid and unioned per worker. A frame is positive when a strict
//! majority of annotators cover it; majority runs shorter than `min_len` are
//! dropped and each survivor is replaced by the tightest single mark covering
//! more than half of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{runs, Interval, IntervalSet};

pub const ANNOTATION_SCHEMA: &str = "ee-annotation/1";

#[derive(Debug, Error)]
pub enum GroundTruthError {
    #[error("worker {worker}: interval {interval} falls outside the {video_len}-frame video")]
    IntervalOutOfVideo {
        worker: String,
        interval: Interval,
        video_len: usize,
    },
    #[error("invalid annotation record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clarity {
    Obvious,
    FairlyClear,
    Subtle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMark {
    /// Evaluation frames relative to the chunk start.
    pub start: usize,
    pub end: usize,
    pub touched: bool,
    pub clarity: Clarity,
    pub description: String,
}

impl AnnotationMark {
    pub fn interval(&self) -> Option<Interval> {
        Interval::new(self.start, self.end)
    }
}

/// One worker's marks on one chunk of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema: String,
    pub video_id: String,
    pub worker_id: String,
    pub chunk_start_sec: f64,
    pub eval_hz: f64,
    pub intervals: Vec<AnnotationMark>,
}

impl AnnotationRecord {
    pub fn new(
        video_id: impl Into<String>,
        worker_id: impl Into<String>,
        chunk_start_sec: f64,
        eval_hz: f64,
        intervals: Vec<AnnotationMark>,
    ) -> Self {
        AnnotationRecord {
            schema: ANNOTATION_SCHEMA.to_string(),
            video_id: video_id.into(),
            worker_id: worker_id.into(),
            chunk_start_sec,
            eval_hz,
            intervals,
        }
    }

    /// Shortest allowed mark, one second on the evaluation grid.
    pub fn min_mark_len(&self) -> usize {
        (self.eval_hz - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), GroundTruthError> {
        let bad = |m: String| Err(GroundTruthError::InvalidRecord(m));
        if self.schema != ANNOTATION_SCHEMA {
            return bad(format!("schema {:?}, expected {ANNOTATION_SCHEMA:?}", self.schema));
        }
        if !(self.eval_hz.is_finite() && self.eval_hz > 0.0) {
            return bad(format!("eval_hz must be positive, got {}", self.eval_hz));
        }
        if !(self.chunk_start_sec.is_finite() && self.chunk_start_sec >= 0.0) {
            return bad(format!("chunk_start_sec must be >= 0, got {}", self.chunk_start_sec));
        }
        let mut ivs = Vec::with_capacity(self.intervals.len());
        for m in &self.intervals {
            let Some(iv) = m.interval() else {
                return bad(format!("empty mark [{}, {})", m.start, m.end));
            };
            if iv.len() < self.min_mark_len() {
                return bad(format!("mark {iv} is shorter than one second"));
            }
            ivs.push(iv);
        }
        IntervalSet::new(ivs).map_err(|e| GroundTruthError::InvalidRecord(e.to_string()))?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, GroundTruthError> {
        let r: AnnotationRecord = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String, GroundTruthError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn offset_frames(&self) -> usize {
        (self.chunk_start_sec * self.eval_hz).round() as usize
    }
}

/// Union of intervals that overlap or touch.
pub fn union_intervals(mut ivs: Vec<Interval>) -> Vec<Interval> {
    ivs.sort();
    let mut out: Vec<Interval> = Vec::with_capacity(ivs.len());
    for iv in ivs {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Shifts every record onto the video timeline and unions each worker's marks.
pub fn merge_chunks(
    records: &[AnnotationRecord],
    video_len: usize,
) -> Result<BTreeMap<String, Vec<Interval>>, GroundTruthError> {
    let mut raw: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for r in records {
        let offset = r.offset_frames();
        let marks = raw.entry(r.worker_id.clone()).or_default();
        for m in &r.intervals {
            let iv = Interval::new(m.start + offset, m.end + offset)
                .ok_or_else(|| GroundTruthError::InvalidRecord(format!("empty mark [{}, {})", m.start, m.end)))?;
            if iv.end > video_len {
                return Err(GroundTruthError::IntervalOutOfVideo {
                    worker: r.worker_id.clone(),
                    interval: iv,
                    video_len,
                });
            }
            marks.push(iv);
        }
    }
    Ok(raw.into_iter().map(|(w, ivs)| (w, union_intervals(ivs))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusTrack {
    pub video_id: String,
    pub n_annotators: usize,
    /// Workers covering each evaluation frame.
    pub votes: Vec<u32>,
    pub gt: IntervalSet,
}

impl ConsensusTrack {
    pub fn video_len(&self) -> usize {
        self.votes.len()
    }

    pub fn frame_labels(&self) -> Vec<bool> {
        self.gt.to_frames(self.video_len())
    }

    /// A unanimous track straight from known intervals.
    pub fn from_intervals(video_id: impl Into<String>, n_annotators: usize, video_len: usize, gt: IntervalSet) -> Self {
        let votes = gt
            .to_frames(video_len)
            .into_iter()
            .map(|on| if on { n_annotators as u32 } else { 0 })
            .collect();
        ConsensusTrack {
            video_id: video_id.into(),
            n_annotators,
            votes,
            gt,
        }
    }
}

/// Shortest candidate overlapping more than half of `consensus` (ties go to
/// the earliest start); `consensus` itself when none qualifies.
pub fn tightest_cover<'a, I>(consensus: Interval, candidates: I) -> Interval
where
    I: IntoIterator<Item = &'a Interval>,
{
    candidates
        .into_iter()
        .filter(|m| 2 * m.overlap(&consensus) > consensus.len())
        .min_by_key(|m| (m.len(), m.start, m.end))
        .copied()
        .unwrap_or(consensus)
}

pub fn consensus(
    video_id: &str,
    per_worker: &BTreeMap<String, Vec<Interval>>,
    n_annotators: usize,
    min_len: usize,
    video_len: usize,
) -> ConsensusTrack {
    assert!(n_annotators >= 1, "consensus needs at least one annotator");
    let min_len = min_len.max(1);
    let mut votes = vec![0u32; video_len];
    for marks in per_worker.values() {
        let mut covered = vec![false; video_len];
        for iv in marks {
            covered[iv.start.min(video_len)..iv.end.min(video_len)].fill(true);
        }
        for (v, c) in votes.iter_mut().zip(covered) {
            *v += c as u32;
        }
    }
    let majority = votes.iter().map(|&v| 2 * v as usize > n_annotators);
    let candidates: Vec<Interval> = per_worker.values().flatten().copied().collect();

    let mut gt: Vec<Interval> = Vec::new();
    for c in runs(majority, min_len) {
        let floor = gt.last().map_or(0, |g| g.end);
        let cover = tightest_cover(c, &candidates);
        let clip = |iv: Interval| Interval::new(iv.start.max(floor), iv.end).filter(|x| x.len() >= min_len);
        if let Some(g) = clip(cover).or_else(|| clip(c)) {
            gt.push(g);
        }
    }
    ConsensusTrack {
        video_id: video_id.to_string(),
        n_annotators,
        votes,
        gt: IntervalSet::new(gt).expect("accepted intervals are clipped to be disjoint"),
    }
}

/// Merge + consensus for one video. `n_annotators` defaults to the number of
/// distinct workers seen.
pub fn aggregate(
    video_id: &str,
    records: &[AnnotationRecord],
    video_len: usize,
    n_annotators: Option<usize>,
    min_len: usize,
) -> Result<ConsensusTrack, GroundTruthError> {
    for r in records {
        r.validate()?;
    }
    let per_worker = merge_chunks(records, video_len)?;
    let n = n_annotators.unwrap_or(per_worker.len()).max(1);
    Ok(consensus(video_id, &per_worker, n, min_len, video_len))
}

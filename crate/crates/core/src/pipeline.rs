//! Frame scoring, level-set proposals and interval classification wired
//! together, plus threshold calibration, the two reference baselines and a
//! causal streaming detector for engagement onsets.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{describe_field, frame_dim, pyramid_dim, DescriptorError, DescriptorTrack, FrameDescriptor};
use crate::exec::Execution;
use crate::flowgrid::{
    eval_to_native, smooth_positions, FlowField, FlowSequence, GaussianKernel, DEFAULT_GRID_H, DEFAULT_GRID_W,
    DEFAULT_SIGMA_SECONDS,
};
use crate::forest::{train_forest_with, FeatureMatrix, ForestError, ForestModel, ForestParams};
use crate::groundtruth::ConsensusTrack;
use crate::interval::{Interval, IntervalSet};
use crate::metrics::frames_to_intervals;
use crate::proposer::{propose, ProposalError};

/// Fraction of engaged frames used to calibrate decision thresholds.
pub const DEFAULT_POSITIVE_RATIO: f64 = 0.438;
pub const MODEL_VERSION: u32 = 1;
const POSITIVE: usize = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("video {video_id} has a {got:?} grid, model expects {expected:?}")]
    GridMismatch {
        video_id: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("training frames are all one class")]
    SingleClassTrainingData,
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("ground truth for {video_id} covers {track} frames, flow covers {flow}")]
    TrackMismatch {
        video_id: String,
        track: usize,
        flow: usize,
    },
    #[error("confidence vector is empty")]
    EmptyInput,
    #[error("positive ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("unsupported model version {0}")]
    VersionUnsupported(u32),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ProposalError> for PipelineError {
    fn from(_: ProposalError) -> Self {
        PipelineError::EmptyInput
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sigma_seconds: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    pub eval_hz: f64,
    /// Shortest proposal, in evaluation frames.
    pub min_len: usize,
    pub frame_forest: ForestParams,
    pub interval_forest: ForestParams,
    pub frame_seed: u64,
    pub interval_seed: u64,
    pub positive_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sigma_seconds: DEFAULT_SIGMA_SECONDS,
            grid_w: DEFAULT_GRID_W,
            grid_h: DEFAULT_GRID_H,
            eval_hz: 1.0,
            min_len: 1,
            frame_forest: ForestParams::default(),
            interval_forest: ForestParams::default(),
            frame_seed: 0,
            interval_seed: 1,
            positive_ratio: DEFAULT_POSITIVE_RATIO,
        }
    }
}

impl PipelineConfig {
    /// 100-tree forests for tests and quick runs.
    pub fn test_profile() -> Self {
        PipelineConfig {
            frame_forest: ForestParams::test_profile(),
            interval_forest: ForestParams::test_profile(),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.frame_seed = seed;
        self.interval_seed = seed.wrapping_add(1);
        self
    }

    pub fn frame_dim(&self) -> usize {
        frame_dim(self.grid_w * self.grid_h)
    }

    pub fn interval_dim(&self) -> usize {
        pyramid_dim(self.frame_dim())
    }

    fn check_grid(&self, video: &FlowSequence) -> Result<(), PipelineError> {
        if (video.grid_w(), video.grid_h()) != (self.grid_w, self.grid_h) {
            return Err(PipelineError::GridMismatch {
                video_id: video.video_id().to_string(),
                expected: (self.grid_w, self.grid_h),
                got: (video.grid_w(), video.grid_h()),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngagementModel {
    pub version: u32,
    pub config: PipelineConfig,
    pub frame_forest: ForestModel,
    pub interval_forest: ForestModel,
}

impl EngagementModel {
    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let model = EngagementModel::deserialize(&mut de)?;
        de.end()?;
        if model.version != MODEL_VERSION {
            return Err(PipelineError::VersionUnsupported(model.version));
        }
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredInterval {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl ScoredInterval {
    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub video_id: String,
    pub eval_hz: f64,
    /// Fused per-frame confidence.
    pub frame_conf: Vec<f64>,
    pub proposals: Vec<ScoredInterval>,
    pub predictions: IntervalSet,
    pub threshold: f64,
    /// Frame classifier output before interval fusion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_forest_conf: Vec<f64>,
}

impl DetectionResult {
    pub fn video_len(&self) -> usize {
        self.frame_conf.len()
    }
}

/// Frame descriptors at every evaluation-grid position of `video`.
pub fn video_descriptors(
    video: &FlowSequence,
    sigma_seconds: f64,
    eval_hz: f64,
    exec: Execution,
) -> Vec<FrameDescriptor> {
    let n = video.eval_len(eval_hz);
    let positions: Vec<usize> = (0..n).map(|e| eval_to_native(e, video.fps(), eval_hz)).collect();
    smooth_positions(video, sigma_seconds, &positions, exec)
        .into_iter()
        .enumerate()
        .map(|(eval_index, f)| FrameDescriptor {
            eval_index,
            values: describe_field(&f.vectors),
        })
        .collect()
}

/// Positive-class posterior for each row.
fn positive_conf(model: &ForestModel, rows: &[FrameDescriptor], exec: Execution) -> Vec<f64> {
    exec.map_slice(rows, |d| {
        model.predict_proba(&d.values).expect("descriptor dimension checked")[POSITIVE]
    })
}

/// Boundary rule: more than half of `p` lies inside one ground-truth interval.
pub fn covered_by_gt(p: &Interval, gt: &IntervalSet) -> bool {
    gt.iter().any(|g| 2 * p.overlap(g) > p.len())
}

pub fn train(
    videos: &[(FlowSequence, ConsensusTrack)],
    config: &PipelineConfig,
) -> Result<EngagementModel, PipelineError> {
    train_with(videos, config, Execution::default())
}

pub fn train_with(
    videos: &[(FlowSequence, ConsensusTrack)],
    config: &PipelineConfig,
    exec: Execution,
) -> Result<EngagementModel, PipelineError> {
    if videos.is_empty() {
        return Err(PipelineError::EmptyDataset("no training videos".into()));
    }
    let mut per_video = Vec::with_capacity(videos.len());
    for (flow, track) in videos {
        config.check_grid(flow)?;
        let n = flow.eval_len(config.eval_hz);
        if track.video_len() != n {
            return Err(PipelineError::TrackMismatch {
                video_id: flow.video_id().to_string(),
                track: track.video_len(),
                flow: n,
            });
        }
        per_video.push(video_descriptors(flow, config.sigma_seconds, config.eval_hz, exec));
    }

    // frame classifier
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut labels = Vec::new();
    for (descs, (_, track)) in per_video.iter().zip(videos) {
        for (d, on) in descs.iter().zip(track.frame_labels()) {
            rows.push(&d.values);
            labels.push(on as usize);
        }
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyDataset("no evaluation frames".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(PipelineError::SingleClassTrainingData);
    }
    let x = FeatureMatrix::from_rows(&rows)?;
    let frame_forest = train_forest_with(&x, &labels, 2, &config.frame_forest, config.frame_seed, exec)?;
    // training proposals come from out-of-bag confidences so that they are as
    // noisy as the ones seen at detection time
    let oob: Vec<f64> = frame_forest
        .oob_proba(&x, exec)?
        .into_iter()
        .map(|p| p[POSITIVE])
        .collect();
    drop(x);

    // interval classifier on proposals from the frame classifier's output
    let dim = config.interval_dim();
    let mut data = Vec::new();
    let mut ilabels = Vec::new();
    let mut offset = 0;
    for (descs, (_, track)) in per_video.iter().zip(videos) {
        let conf = &oob[offset..offset + descs.len()];
        offset += descs.len();
        let proposals = propose(conf, config.min_len)?.proposals;
        let dtrack = DescriptorTrack::new(descs)?;
        let pyramids = exec.map_slice(&proposals, |p| dtrack.pyramid(*p));
        for (p, pyr) in proposals.iter().zip(pyramids) {
            data.extend_from_slice(&pyr?.values);
            ilabels.push(covered_by_gt(p, &track.gt) as usize);
        }
    }
    if ilabels.is_empty() {
        return Err(PipelineError::EmptyDataset(
            "training videos produced no interval proposals".into(),
        ));
    }
    let xi = FeatureMatrix::new(ilabels.len(), dim, data)?;
    let interval_forest = train_forest_with(&xi, &ilabels, 2, &config.interval_forest, config.interval_seed, exec)?;

    Ok(EngagementModel {
        version: MODEL_VERSION,
        config: config.clone(),
        frame_forest,
        interval_forest,
    })
}

/// Threshold such that `round(ratio * n)` frames lie strictly above it; when
/// ties straddle the cut, fewer frames are admitted.
pub fn calibrate_threshold(conf: &[f64], positive_ratio: f64) -> Result<f64, PipelineError> {
    if conf.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    if !(positive_ratio > 0.0 && positive_ratio < 1.0) {
        return Err(PipelineError::InvalidRatio(positive_ratio));
    }
    let mut sorted = conf.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let k = (positive_ratio * n as f64).round() as usize;
    if k == 0 {
        return Ok(sorted[0]);
    }
    if k >= n {
        return Ok(next_down(sorted[n - 1]));
    }
    Ok(sorted[k])
}

fn next_down(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return x;
    }
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits - 1 } else { bits + 1 })
}

/// Frames above the calibrated threshold, as maximal runs.
pub fn threshold_frames(
    conf: &[f64],
    positive_ratio: f64,
    min_len: usize,
) -> Result<(f64, IntervalSet), PipelineError> {
    let t = calibrate_threshold(conf, positive_ratio)?;
    let mask: Vec<bool> = conf.iter().map(|&c| c > t).collect();
    Ok((t, frames_to_intervals(&mask, min_len)))
}

/// Greedy non-maximum suppression: highest score first, dropping anything
/// that overlaps an accepted interval. Only scores above `threshold` compete.
/// Equal scores go longest first, then earliest.
pub fn non_max_suppression(proposals: &[ScoredInterval], threshold: f64) -> IntervalSet {
    let mut order: Vec<&ScoredInterval> = proposals.iter().filter(|p| p.score > threshold).collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then((b.end - b.start).cmp(&(a.end - a.start)))
            .then(a.start.cmp(&b.start))
    });
    let mut kept: Vec<Interval> = Vec::new();
    for p in order {
        let iv = p.interval();
        if kept.iter().all(|k| !k.overlaps(&iv)) {
            kept.push(iv);
        }
    }
    IntervalSet::new(kept).expect("suppression keeps intervals disjoint")
}

/// Per frame, the best score among covering proposals; `fallback` elsewhere.
pub fn fuse_scores(proposals: &[ScoredInterval], fallback: &[f64]) -> Vec<f64> {
    let mut best: Vec<Option<f64>> = vec![None; fallback.len()];
    for p in proposals {
        for slot in &mut best[p.start..p.end.min(fallback.len())] {
            *slot = Some(slot.map_or(p.score, |s: f64| s.max(p.score)));
        }
    }
    best.iter().zip(fallback).map(|(b, &f)| b.unwrap_or(f)).collect()
}

pub fn detect(model: &EngagementModel, video: &FlowSequence) -> Result<DetectionResult, PipelineError> {
    detect_with(model, video, model.config.positive_ratio, Execution::default())
}

pub fn detect_with(
    model: &EngagementModel,
    video: &FlowSequence,
    positive_ratio: f64,
    exec: Execution,
) -> Result<DetectionResult, PipelineError> {
    let cfg = &model.config;
    cfg.check_grid(video)?;
    let descs = video_descriptors(video, cfg.sigma_seconds, cfg.eval_hz, exec);
    let raw = positive_conf(&model.frame_forest, &descs, exec);
    let proposals = propose(&raw, cfg.min_len)?.proposals;
    let dtrack = DescriptorTrack::new(&descs)?;
    let scored = exec
        .map_slice(&proposals, |p| -> Result<ScoredInterval, PipelineError> {
            let pyr = dtrack.pyramid(*p)?;
            let score = model.interval_forest.predict_proba(&pyr.values)?[POSITIVE];
            Ok(ScoredInterval {
                start: p.start,
                end: p.end,
                score,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let frame_conf = fuse_scores(&scored, &raw);
    let threshold = calibrate_threshold(&frame_conf, positive_ratio)?;
    let predictions = non_max_suppression(&scored, threshold);
    Ok(DetectionResult {
        video_id: video.video_id().to_string(),
        eval_hz: cfg.eval_hz,
        frame_conf,
        proposals: scored,
        predictions,
        threshold,
        frame_forest_conf: raw,
    })
}

/// Inverse mean flow magnitude, `1 / (1 + mean_cells |v|)`, at each
/// evaluation frame of an already smoothed sequence.
pub fn baseline_motion_magnitude(smoothed: &FlowSequence, eval_hz: f64) -> Vec<f64> {
    (0..smoothed.eval_len(eval_hz))
        .map(|e| {
            let f = &smoothed.fields()[eval_to_native(e, smoothed.fps(), eval_hz)];
            motion_conf(&f.vectors)
        })
        .collect()
}

fn motion_conf(vectors: &[[f64; 2]]) -> f64 {
    let mean = vectors.iter().map(|v| v[0].hypot(v[1])).sum::<f64>() / vectors.len() as f64;
    1.0 / (1.0 + mean)
}

/// Motion-magnitude confidences with the same smoothing as the frame
/// descriptors, computed only at evaluation positions.
pub fn motion_baseline_conf(video: &FlowSequence, sigma_seconds: f64, eval_hz: f64, exec: Execution) -> Vec<f64> {
    let n = video.eval_len(eval_hz);
    let positions: Vec<usize> = (0..n).map(|e| eval_to_native(e, video.fps(), eval_hz)).collect();
    smooth_positions(video, sigma_seconds, &positions, exec)
        .iter()
        .map(|f| motion_conf(&f.vectors))
        .collect()
}

/// Ground-truth statistics for prior-informed random predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPrior {
    /// Observed interval lengths, evaluation frames.
    pub lengths: Vec<usize>,
    /// Relative weight of positive frames over equal-width bins of normalized
    /// video time.
    pub position_hist: Vec<f64>,
    pub positive_ratio: f64,
}

impl RandomPrior {
    pub fn from_tracks(tracks: &[ConsensusTrack], bins: usize) -> RandomPrior {
        let bins = bins.max(1);
        let mut hist = vec![0.0; bins];
        let mut lengths = Vec::new();
        let (mut pos, mut total) = (0usize, 0usize);
        for t in tracks {
            let n = t.video_len();
            total += n;
            for g in t.gt.iter() {
                lengths.push(g.len());
                pos += g.len();
                for f in g.frames() {
                    hist[(f * bins / n.max(1)).min(bins - 1)] += 1.0;
                }
            }
        }
        RandomPrior {
            lengths,
            position_hist: hist,
            positive_ratio: if total == 0 { 0.0 } else { pos as f64 / total as f64 },
        }
    }
}

/// Attempts per generated set before giving up on reaching the prior ratio.
const RANDOM_ATTEMPT_BUDGET: usize = 10_000;

/// `n_reps` independent consistent interval sets drawn from the prior.
pub fn baseline_random(video_len: usize, prior: &RandomPrior, n_reps: usize, seed: u64) -> Vec<IntervalSet> {
    (0..n_reps)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            random_set(video_len, prior, &mut rng)
        })
        .collect()
}

fn random_set(video_len: usize, prior: &RandomPrior, rng: &mut ChaCha8Rng) -> IntervalSet {
    let target = (prior.positive_ratio * video_len as f64).round() as usize;
    let hist_total: f64 = prior.position_hist.iter().sum();
    if target == 0 || prior.lengths.is_empty() || video_len == 0 {
        return IntervalSet::empty();
    }
    let bins = prior.position_hist.len();
    let mut taken: Vec<Interval> = Vec::new();
    let mut covered = 0;
    for _ in 0..RANDOM_ATTEMPT_BUDGET {
        if covered >= target {
            break;
        }
        let len = prior.lengths[rng.random_range(0..prior.lengths.len())]
            .min(target - covered)
            .min(video_len);
        let bin = if hist_total > 0.0 {
            let mut r = rng.random::<f64>() * hist_total;
            let mut b = 0;
            while b + 1 < bins && r >= prior.position_hist[b] {
                r -= prior.position_hist[b];
                b += 1;
            }
            b
        } else {
            rng.random_range(0..bins)
        };
        let pos = (bin as f64 + rng.random::<f64>()) / bins as f64;
        let start = ((pos * video_len as f64) as usize).min(video_len - len);
        let iv = Interval::new(start, start + len).unwrap();
        if taken.iter().all(|t| !t.overlaps(&iv)) {
            covered += len;
            taken.push(iv);
        }
    }
    IntervalSet::new(taken).expect("overlapping draws are rejected")
}

/// Fires when confidence rises above the threshold after at least
/// `min_below` consecutive frames strictly below it.
#[derive(Clone, Debug)]
pub struct OnsetDetector {
    threshold: f64,
    min_below: usize,
    below: usize,
    index: usize,
}

impl OnsetDetector {
    pub fn new(threshold: f64, min_below: usize) -> Self {
        OnsetDetector {
            threshold,
            min_below,
            below: 0,
            index: 0,
        }
    }

    /// Feeds the next frame's confidence; returns its index on an onset.
    pub fn push(&mut self, conf: f64) -> Option<usize> {
        let i = self.index;
        self.index += 1;
        if conf < self.threshold {
            self.below += 1;
            None
        } else {
            let fire = conf > self.threshold && self.below >= self.min_below;
            self.below = 0;
            fire.then_some(i)
        }
    }
}

/// Causal frame scoring over a flow stream. Smoothing uses only the past half
/// of the Gaussian, so the output for a prefix never depends on later frames.
pub struct StreamDetector<'a> {
    model: &'a EngagementModel,
    fps: f64,
    kernel: GaussianKernel,
    window: VecDeque<FlowField>,
    seen: usize,
    next_eval: usize,
    onset: OnsetDetector,
    conf: Vec<f64>,
    onsets: Vec<usize>,
}

impl<'a> StreamDetector<'a> {
    pub fn new(model: &'a EngagementModel, fps: f64, threshold: f64) -> Self {
        let cfg = &model.config;
        let min_below = (cfg.eval_hz - 1e-9).ceil().max(1.0) as usize;
        StreamDetector {
            model,
            fps,
            kernel: GaussianKernel::new(cfg.sigma_seconds * fps),
            window: VecDeque::new(),
            seen: 0,
            next_eval: 0,
            onset: OnsetDetector::new(threshold, min_below),
            conf: Vec::new(),
            onsets: Vec::new(),
        }
    }

    /// Consumes the next native frame; returns an onset (evaluation frame) if
    /// one fires at this frame.
    pub fn push(&mut self, vectors: Vec<[f64; 2]>) -> Result<Option<usize>, PipelineError> {
        let cfg = &self.model.config;
        if vectors.len() != cfg.grid_w * cfg.grid_h {
            return Err(PipelineError::GridMismatch {
                video_id: "stream".into(),
                expected: (cfg.grid_w, cfg.grid_h),
                got: (vectors.len(), 1),
            });
        }
        self.window.push_back(FlowField {
            frame_index: self.seen,
            vectors,
        });
        if self.window.len() > self.kernel.radius() + 1 {
            self.window.pop_front();
        }
        let frame = self.seen;
        self.seen += 1;
        if frame != eval_to_native(self.next_eval, self.fps, cfg.eval_hz) {
            return Ok(None);
        }
        self.next_eval += 1;
        let window = self.window.make_contiguous();
        let smoothed = self.kernel.apply_at(window, window.len() - 1, true);
        let c = self.model.frame_forest.predict_proba(&describe_field(&smoothed))?[POSITIVE];
        self.conf.push(c);
        let fired = self.onset.push(c);
        self.onsets.extend(fired);
        Ok(fired)
    }

    /// Causal confidences emitted so far, one per evaluation frame.
    pub fn confidences(&self) -> &[f64] {
        &self.conf
    }

    pub fn onsets(&self) -> &[usize] {
        &self.onsets
    }
}

/// Onsets for a whole flow sequence, processed strictly front to back.
pub fn stream_detect(
    model: &EngagementModel,
    video: &FlowSequence,
    threshold: f64,
) -> Result<Vec<usize>, PipelineError> {
    Ok(stream_confidences(model, video, threshold)?.1)
}

/// Causal confidences and onsets for a whole sequence.
pub fn stream_confidences(
    model: &EngagementModel,
    video: &FlowSequence,
    threshold: f64,
) -> Result<(Vec<f64>, Vec<usize>), PipelineError> {
    model.config.check_grid(video)?;
    let mut s = StreamDetector::new(model, video.fps(), threshold);
    for f in video.fields() {
        s.push(f.vectors.clone())?;
    }
    Ok((s.conf, s.onsets))
}

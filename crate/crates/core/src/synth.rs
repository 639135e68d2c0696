//! Synthetic egocentric flow with known engagement intervals.
//!
//! A video alternates walking and engagement segments. Walking produces a
//! radial-expansion field (forward motion) plus vertical head bobble, lateral
//! sway, slow stretches and idle stops with glances aside; it slows down when
//! approaching an engagement. Engagement turns the head toward the object,
//! holds a slight roll about it and stays mostly still, interrupted by head
//! turns (uniform horizontal flow), reach-downs (downward flow in the lower
//! rows) and slow browsing steps, then turns back. Segment lengths follow a
//! lognormal fit to a median of 11.3 s and an interquartile range of 17.6 s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::flowgrid::{eval_len, FlowSequence, DEFAULT_FPS, DEFAULT_GRID_H, DEFAULT_GRID_W};
use crate::groundtruth::{AnnotationMark, AnnotationRecord, Clarity, ConsensusTrack};
use crate::interval::{Interval, IntervalSet};

/// Length of an annotation chunk and the stride between chunk starts.
pub const CHUNK_SEC: f64 = 180.0;
pub const CHUNK_STRIDE_SEC: f64 = 120.0;

/// Standard normal quantile at 0.75.
const Z75: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkingRegime {
    /// Peripheral forward-motion speed range, pixels per frame.
    pub speed: (f64, f64),
    pub bobble_amp: f64,
    pub bobble_hz: f64,
    pub sway_amp: f64,
    /// Chance per second of entering a slow stretch.
    pub slow_rate_hz: f64,
    pub slow_sec: (f64, f64),
    pub slow_factor: f64,
    /// Chance per second of standing still without engaging.
    pub idle_rate_hz: f64,
    pub idle_sec: (f64, f64),
    /// Brief glances aside while idle.
    pub glance_rate_hz: f64,
    pub glance_sec: (f64, f64),
    pub glance_amp: (f64, f64),
    /// Speed ramps down over this long before an engagement and back up after.
    pub approach_sec: f64,
    pub noise: f64,
}

impl Default for WalkingRegime {
    fn default() -> Self {
        WalkingRegime {
            speed: (1.2, 2.6),
            bobble_amp: 1.0,
            bobble_hz: 1.8,
            sway_amp: 0.4,
            slow_rate_hz: 1.0 / 25.0,
            slow_sec: (2.0, 6.0),
            slow_factor: 0.2,
            idle_rate_hz: 1.0 / 40.0,
            idle_sec: (3.0, 12.0),
            glance_rate_hz: 1.0 / 6.0,
            glance_sec: (0.5, 1.0),
            glance_amp: (1.5, 3.5),
            approach_sec: 2.0,
            noise: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngagementRegime {
    /// Slight roll about the fixated object, held for a whole segment.
    pub fixation_roll: (f64, f64),
    pub drift: f64,
    pub head_turn_rate_hz: f64,
    pub head_turn_sec: (f64, f64),
    pub head_turn_amp: (f64, f64),
    pub reach_rate_hz: f64,
    pub reach_sec: (f64, f64),
    pub reach_amp: f64,
    /// Turn toward the object at the start and back at the end.
    pub edge_turn_sec: f64,
    /// Slow browsing steps while still engaged.
    pub step_rate_hz: f64,
    pub step_sec: (f64, f64),
    pub step_factor: (f64, f64),
    /// Sideways pan while stepping, keeping the object in view.
    pub step_pan: (f64, f64),
    pub noise: f64,
}

impl Default for EngagementRegime {
    fn default() -> Self {
        EngagementRegime {
            fixation_roll: (0.3, 0.6),
            drift: 0.25,
            head_turn_rate_hz: 1.0 / 8.0,
            head_turn_sec: (0.8, 1.6),
            head_turn_amp: (2.5, 4.5),
            reach_rate_hz: 1.0 / 10.0,
            reach_sec: (1.0, 2.0),
            reach_amp: 2.0,
            edge_turn_sec: 1.0,
            step_rate_hz: 1.0 / 15.0,
            step_sec: (1.5, 3.5),
            step_factor: (0.3, 0.6),
            step_pan: (1.0, 2.0),
            noise: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub video_id: String,
    pub duration_sec: f64,
    pub fps: f64,
    pub eval_hz: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    pub attention_ratio: f64,
    pub length_median_sec: f64,
    pub length_iqr_sec: f64,
    pub max_length_sec: f64,
    /// Minimum walking gap between engagement segments.
    pub min_gap_sec: f64,
    pub n_annotators: usize,
    pub walking: WalkingRegime,
    pub engagement: EngagementRegime,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            video_id: "synth".into(),
            duration_sec: 600.0,
            fps: DEFAULT_FPS,
            eval_hz: 1.0,
            grid_w: DEFAULT_GRID_W,
            grid_h: DEFAULT_GRID_H,
            attention_ratio: 0.438,
            length_median_sec: 11.3,
            length_iqr_sec: 17.6,
            max_length_sec: 120.0,
            min_gap_sec: 2.0,
            n_annotators: 10,
            walking: WalkingRegime::default(),
            engagement: EngagementRegime::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.attention_ratio > 0.0 && self.attention_ratio < 1.0) {
            return bad("attention_ratio must lie in (0, 1)");
        }
        if self.duration_sec.is_nan() || self.duration_sec < 60.0 {
            return bad("duration_sec must be at least 60");
        }
        if !(self.fps > 0.0 && self.eval_hz > 0.0 && self.eval_hz <= self.fps) {
            return bad("need 0 < eval_hz <= fps");
        }
        if self.grid_w == 0 || self.grid_h == 0 {
            return bad("grid dimensions must be nonzero");
        }
        if !(self.length_median_sec > 0.0 && self.length_iqr_sec > 0.0) {
            return bad("length median and IQR must be positive");
        }
        if !(self.max_length_sec >= 1.0 && self.min_gap_sec >= 0.0) {
            return bad("max_length_sec must be >= 1 and min_gap_sec >= 0");
        }
        if self.n_annotators == 0 {
            return bad("n_annotators must be at least 1");
        }
        let (lo, hi) = self.walking.speed;
        if !(lo > 0.0 && hi >= lo) {
            return bad("walking speed range must be positive and ordered");
        }
        Ok(())
    }

    /// Lognormal (mu, sigma) matching the configured median and IQR.
    pub fn length_lognormal(&self) -> (f64, f64) {
        let mu = self.length_median_sec.ln();
        let sigma = (self.length_iqr_sec / (2.0 * self.length_median_sec)).asinh() / Z75;
        (mu, sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    HeadTurn { sign: f64, amp: f64 },
    Reach,
    Slow,
    Step { factor: f64, pan: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    Walk,
    Idle,
    Engaged,
}

#[derive(Clone, Copy, Debug)]
struct FrameState {
    mode: Mode,
    roll: f64,
    /// Walking speed after approach ramps.
    speed: f64,
    event: Option<Event>,
    drift: [f64; 2],
}

/// Engagement segments on the evaluation grid, sorted, separated by at least
/// `min_gap_sec` of walking.
fn plan_segments(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, total: usize) -> Vec<Interval> {
    let hz = cfg.eval_hz;
    let min_len = hz.ceil().max(1.0) as usize;
    let max_len = ((cfg.max_length_sec * hz).round() as usize).max(min_len);
    let min_gap = (cfg.min_gap_sec * hz).ceil() as usize;
    let target = (cfg.attention_ratio * total as f64).round() as usize;
    let (mu, sigma) = cfg.length_lognormal();
    let dist = LogNormal::new(mu, sigma).expect("valid lognormal");

    let mut lengths = Vec::new();
    let mut sum = 0;
    while sum < target {
        let l = ((dist.sample(rng) * hz).round() as usize).clamp(min_len, max_len);
        let l = l.min(target - sum);
        if l < min_len {
            break;
        }
        lengths.push(l);
        sum += l;
    }
    // drop segments until the walking budget fits the mandatory gaps
    while !lengths.is_empty() && total - sum < (lengths.len() - 1) * min_gap {
        sum -= lengths.pop().unwrap();
    }
    let k = lengths.len();
    if k == 0 {
        return Vec::new();
    }
    let spare = total - sum - (k - 1) * min_gap;
    let weights: Vec<f64> = (0..=k).map(|_| Exp1.sample(rng)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut gaps: Vec<usize> = weights
        .iter()
        .map(|w| (w / wsum * spare as f64).floor() as usize)
        .collect();
    let mut left = spare - gaps.iter().sum::<usize>();
    let mut i = 0;
    while left > 0 {
        gaps[i % (k + 1)] += 1;
        left -= 1;
        i += 1;
    }
    for g in gaps.iter_mut().take(k).skip(1) {
        *g += min_gap;
    }

    let mut out = Vec::with_capacity(k);
    let mut t = gaps[0];
    for (j, &l) in lengths.iter().enumerate() {
        out.push(Interval::new(t, t + l).unwrap());
        t += l + gaps[j + 1];
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Per-native-frame regime, speed and event timeline.
fn plan_frames(cfg: &ScenarioConfig, segments: &[Interval], n_frames: usize, rng: &mut ChaCha8Rng) -> Vec<FrameState> {
    let per_eval = cfg.fps / cfg.eval_hz;
    let native: Vec<(usize, usize)> = segments
        .iter()
        .map(|seg| {
            let a = ((seg.start as f64 * per_eval).round() as usize).min(n_frames);
            let b = ((seg.end as f64 * per_eval).round() as usize).min(n_frames);
            (a, b)
        })
        .collect();
    let mut engaged = vec![false; n_frames];
    // distance in frames to the nearest engagement segment, for approach ramps
    let mut to_segment = vec![usize::MAX; n_frames];
    for &(a, b) in &native {
        engaged[a..b].iter_mut().for_each(|e| *e = true);
    }
    let mut last = None;
    for t in 0..n_frames {
        if engaged[t] {
            last = Some(t);
        } else if let Some(l) = last {
            to_segment[t] = t - l;
        }
    }
    let mut next = None;
    for t in (0..n_frames).rev() {
        if engaged[t] {
            next = Some(t);
        } else if let Some(nx) = next {
            to_segment[t] = to_segment[t].min(nx - t);
        }
    }

    let dt = 1.0 / cfg.fps;
    let walk = &cfg.walking;
    let eng = &cfg.engagement;
    let secs = |r: (f64, f64), rng: &mut ChaCha8Rng| (uniform(rng, r) * cfg.fps).round().max(1.0) as usize;
    let drift_step = Normal::new(0.0, eng.drift * dt.sqrt()).unwrap();
    let approach = (walk.approach_sec * cfg.fps).round() as usize;

    let mut states = Vec::with_capacity(n_frames);
    let mut speed = uniform(rng, walk.speed);
    let mut drift = [0.0f64; 2];
    let mut event: Option<(Event, usize)> = None;
    let mut idle_until = 0;
    let mut mode = None;
    let mut seg = 0;
    let mut edge = (0.0, 0.0, 0);
    let mut roll = 0.0;
    for t in 0..n_frames {
        while seg < native.len() && native[seg].1 <= t {
            seg += 1;
        }
        let now = if engaged[t] {
            Mode::Engaged
        } else if t < idle_until {
            Mode::Idle
        } else if rng.random::<f64>() < walk.idle_rate_hz * dt && to_segment[t] > approach {
            idle_until = t + secs(walk.idle_sec, rng);
            Mode::Idle
        } else {
            Mode::Walk
        };
        if mode != Some(now) {
            // regime switch: fresh drift, cancel events
            if now != Mode::Idle {
                speed = uniform(rng, walk.speed);
            }
            if now == Mode::Engaged {
                let (a, b) = native[seg];
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let turn = ((eng.edge_turn_sec * cfg.fps).round() as usize).min((b - a) / 2);
                edge = (sign, uniform(rng, eng.head_turn_amp), turn);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                roll = sign * uniform(rng, eng.fixation_roll);
            }
            if now == Mode::Walk {
                idle_until = 0;
            }
            drift = [0.0, 0.0];
            event = None;
            mode = Some(now);
        }
        if event.is_some_and(|(_, until)| t >= until) {
            event = None;
        }
        if event.is_none() {
            let draw: f64 = rng.random();
            event = match now {
                Mode::Engaged => {
                    let (h, r, st) = (
                        eng.head_turn_rate_hz * dt,
                        eng.reach_rate_hz * dt,
                        eng.step_rate_hz * dt,
                    );
                    if draw < h {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        let amp = uniform(rng, eng.head_turn_amp);
                        Some((Event::HeadTurn { sign, amp }, t + secs(eng.head_turn_sec, rng)))
                    } else if draw < h + r {
                        Some((Event::Reach, t + secs(eng.reach_sec, rng)))
                    } else if draw < h + r + st {
                        let factor = uniform(rng, eng.step_factor);
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        let pan = sign * uniform(rng, eng.step_pan);
                        Some((Event::Step { factor, pan }, t + secs(eng.step_sec, rng)))
                    } else {
                        None
                    }
                }
                Mode::Idle => (draw < walk.glance_rate_hz * dt).then(|| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let amp = uniform(rng, walk.glance_amp);
                    (Event::HeadTurn { sign, amp }, t + secs(walk.glance_sec, rng))
                }),
                Mode::Walk => (draw < walk.slow_rate_hz * dt).then(|| (Event::Slow, t + secs(walk.slow_sec, rng))),
            };
        }
        if now != Mode::Walk {
            for d in &mut drift {
                *d = (*d + drift_step.sample(rng)).clamp(-eng.drift, eng.drift);
            }
        }
        let mut current = event.map(|e| e.0);
        if now == Mode::Engaged {
            let (a, b) = native[seg];
            let (sign, amp, turn) = edge;
            if t < a + turn {
                current = Some(Event::HeadTurn { sign, amp });
            } else if t >= b - turn {
                current = Some(Event::HeadTurn { sign: -sign, amp });
            }
        }
        let ramp = if approach == 0 {
            1.0
        } else {
            (to_segment[t].min(approach) as f64 / approach as f64).max(0.1)
        };
        states.push(FrameState {
            mode: now,
            roll: if now == Mode::Engaged { roll } else { 0.0 },
            speed: speed * ramp,
            event: current,
            drift,
        });
    }
    states
}

fn render_frame(cfg: &ScenarioConfig, state: &FrameState, t: usize, phase: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let (gw, gh) = (cfg.grid_w, cfg.grid_h);
    let time = t as f64 / cfg.fps;
    let mut out = Vec::with_capacity(gw * gh);
    let walk = &cfg.walking;
    let eng = &cfg.engagement;
    let noise_sd = if state.mode == Mode::Engaged {
        eng.noise
    } else {
        walk.noise
    };
    let bob = walk.bobble_amp * (2.0 * std::f64::consts::PI * walk.bobble_hz * time + phase).sin();
    let sway = walk.sway_amp * (std::f64::consts::PI * walk.bobble_hz * time + phase).sin();
    for gy in 0..gh {
        let v = (gy as f64 + 0.5) / gh as f64 * 2.0 - 1.0;
        for gx in 0..gw {
            let u = (gx as f64 + 0.5) / gw as f64 * 2.0 - 1.0;
            let walking = |factor: f64| [factor * (state.speed * u + sway), factor * (state.speed * v + bob)];
            let mut f = match (state.mode, state.event) {
                (Mode::Walk, Some(Event::Slow)) => walking(walk.slow_factor),
                (Mode::Walk, _) => walking(1.0),
                (_, Some(Event::Step { factor, pan })) => {
                    let w = walking(factor);
                    [w[0] + state.drift[0] + pan, w[1] + state.drift[1]]
                }
                (_, event) => {
                    let mut f = state.drift;
                    match event {
                        Some(Event::HeadTurn { sign, amp }) => f[0] += sign * amp,
                        Some(Event::Reach) if v > 0.0 => f[1] += eng.reach_amp * v,
                        _ => {}
                    }
                    f
                }
            };
            f[0] -= state.roll * v;
            f[1] += state.roll * u;
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            f[0] += noise_sd * nx;
            f[1] += noise_sd * ny;
            out.push(f);
        }
    }
    out
}

/// Generates one video and its unanimous ground truth.
pub fn generate(cfg: &ScenarioConfig) -> Result<(FlowSequence, ConsensusTrack), SynthError> {
    generate_with(cfg, Execution::default())
}

pub fn generate_with(cfg: &ScenarioConfig, exec: Execution) -> Result<(FlowSequence, ConsensusTrack), SynthError> {
    cfg.validate()?;
    let n_frames = (cfg.duration_sec * cfg.fps).round() as usize;
    let total = eval_len(n_frames, cfg.fps, cfg.eval_hz);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let segments = plan_segments(cfg, &mut rng, total);
    let states = plan_frames(cfg, &segments, n_frames, &mut rng);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    let frames = exec.map_range(n_frames, |t| {
        let mut frng = ChaCha8Rng::seed_from_u64(cfg.seed);
        frng.set_stream(1 + t as u64);
        render_frame(cfg, &states[t], t, phase, &mut frng)
    });
    let flow = FlowSequence::from_vectors(cfg.video_id.clone(), cfg.fps, cfg.grid_w, cfg.grid_h, frames)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let gt = IntervalSet::new(segments).expect("planned segments are disjoint");
    let track = ConsensusTrack::from_intervals(cfg.video_id.clone(), cfg.n_annotators, total, gt);
    Ok((flow, track))
}

/// Simulated annotator disagreement: each worker independently misses each
/// ground-truth interval with `miss_prob` and shifts its boundaries by a
/// Gaussian offset (sd `boundary_jitter_sec`, truncated at two sd). Marks are
/// cut into overlapping chunks the way a crowd task would present them.
pub fn perturb_annotations(
    track: &ConsensusTrack,
    n_workers: usize,
    boundary_jitter_sec: f64,
    miss_prob: f64,
    eval_hz: f64,
    seed: u64,
) -> Vec<AnnotationRecord> {
    assert!(n_workers >= 1, "need at least one worker");
    let total = track.video_len();
    let min_len = (eval_hz - 1e-9).ceil().max(1.0) as usize;
    let sd = boundary_jitter_sec * eval_hz;
    let chunk = (CHUNK_SEC * eval_hz).round() as usize;
    let stride = (CHUNK_STRIDE_SEC * eval_hz).round() as usize;

    let mut records = Vec::new();
    for w in 0..n_workers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(w as u64);
        let jitter = |rng: &mut ChaCha8Rng| -> i64 {
            if sd <= 0.0 {
                return 0;
            }
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= 2.0 {
                    return (z * sd).round() as i64;
                }
            }
        };
        let mut marks: Vec<Interval> = Vec::new();
        for g in track.gt.iter() {
            if rng.random::<f64>() < miss_prob {
                continue;
            }
            let s = (g.start as i64 + jitter(&mut rng)).clamp(0, total as i64) as usize;
            let e = (g.end as i64 + jitter(&mut rng)).clamp(0, total as i64) as usize;
            let floor = marks.last().map_or(0, |m| m.end);
            let s = s.max(floor);
            if e >= s + min_len {
                marks.push(Interval::new(s, e).unwrap());
            }
        }
        let attrs: Vec<(bool, Clarity)> = marks
            .iter()
            .map(|_| {
                let clarity = match rng.random_range(0..3) {
                    0 => Clarity::Obvious,
                    1 => Clarity::FairlyClear,
                    _ => Clarity::Subtle,
                };
                (rng.random::<bool>(), clarity)
            })
            .collect();

        let worker_id = format!("worker{w:02}");
        let mut cs = 0;
        loop {
            let ce = (cs + chunk).min(total);
            let pieces = marks
                .iter()
                .zip(&attrs)
                .filter_map(|(m, &(touched, clarity))| {
                    let a = m.start.max(cs);
                    let b = m.end.min(ce);
                    // a sliver cut off at a chunk edge also lies inside the neighbouring chunk
                    (b >= a + min_len).then(|| AnnotationMark {
                        start: a - cs,
                        end: b - cs,
                        touched,
                        clarity,
                        description: "synthetic".into(),
                    })
                })
                .collect();
            records.push(AnnotationRecord::new(
                track.video_id.clone(),
                worker_id.clone(),
                cs as f64 / eval_hz,
                eval_hz,
                pieces,
            ));
            if ce >= total {
                break;
            }
            cs += stride;
        }
    }
    records
}

/// One generated video with the metadata used by split rules.
#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub flow: FlowSequence,
    pub track: ConsensusTrack,
    pub recorder: String,
    pub scenario: String,
}

/// `n_videos` videos with per-video seeds derived from `seed`. Videos are
/// spread over three recorders and three scenarios; each recorder walks at its
/// own pace and each scenario shifts the attention ratio slightly.
pub fn generate_corpus(base: &ScenarioConfig, n_videos: usize, seed: u64) -> Result<Vec<SyntheticVideo>, SynthError> {
    const RECORDERS: [(&str, f64); 3] = [("r1", 1.0), ("r2", 0.85), ("r3", 1.15)];
    const SCENARIOS: [(&str, f64); 3] = [("mall", -0.03), ("market", 0.0), ("museum", 0.03)];
    (0..n_videos)
        .map(|i| {
            let (recorder, pace) = RECORDERS[i % RECORDERS.len()];
            let (scenario, shift) = SCENARIOS[(i / RECORDERS.len()) % SCENARIOS.len()];
            let mut cfg = base.clone();
            cfg.video_id = format!("video{i:03}");
            cfg.seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            cfg.walking.speed = (base.walking.speed.0 * pace, base.walking.speed.1 * pace);
            cfg.attention_ratio = (base.attention_ratio + shift).clamp(0.05, 0.95);
            let (flow, track) = generate(&cfg)?;
            Ok(SyntheticVideo {
                flow,
                track,
                recorder: recorder.to_string(),
                scenario: scenario.to_string(),
            })
        })
        .collect()
}

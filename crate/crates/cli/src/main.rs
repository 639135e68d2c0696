//! `engage`: synthetic data, ground-truth aggregation, training, detection,
//! evaluation and baselines from the command line.

mod fsio;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use engage_core::exec::limit_threads;
use engage_core::metrics::{MetricReport, DEFAULT_TOLERANCES};
use engage_core::pipeline::{
    baseline_random, detect_with, motion_baseline_conf, threshold_frames, train_with, EngagementModel, PipelineConfig,
    RandomPrior, DEFAULT_POSITIVE_RATIO,
};
use engage_core::synth::{generate_corpus, perturb_annotations, ScenarioConfig};
use engage_core::{ConsensusTrack, Execution, IntervalSet};
use serde::{Deserialize, Serialize};

use manifest::{Dataset, DatasetManifest, ManifestEntry};

#[derive(Parser)]
#[command(
    name = "engage",
    version,
    about = "Detect heightened engagement in first-person video from motion"
)]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, env = "EE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic flow files, simulated annotations and a manifest.
    Synth {
        /// JSON synthesis config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides `n_videos` from the config.
        #[arg(long)]
        n_videos: Option<usize>,
    },
    /// Merge annotation chunks and write one consensus track per video.
    Aggregate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory, one `<video_id>.json` per video.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the manifest videos left after applying the split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::None)]
        split: Split,
        /// Recorder, scenario, or `recorder:scenario` for cross-both.
        #[arg(long)]
        hold_out: Option<String>,
        #[arg(long)]
        model_out: PathBuf,
        /// JSON pipeline config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trees per forest, overriding the config.
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a flow file and write a detection result.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, default_value_t = DEFAULT_POSITIVE_RATIO)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the flow file name.
        #[arg(long)]
        video_id: Option<String>,
    },
    /// Compare predictions with a consensus track.
    Eval {
        /// Detection result, baseline output, consensus track or bare interval list.
        #[arg(long)]
        pred: PathBuf,
        /// Consensus track.
        #[arg(long)]
        gt: PathBuf,
        /// Start-point tolerances in seconds.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TOLERANCES)]
        tolerances: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the start-point curve as CSV.
        #[arg(long)]
        curve_csv: Option<PathBuf>,
    },
    /// Reference predictions: inverse motion magnitude or prior-informed random.
    Baseline {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_POSITIVE_RATIO)]
        ratio: f64,
        /// Consensus tracks the random prior is estimated from.
        #[arg(long, num_args = 1..)]
        gt: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        video_id: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Split {
    None,
    CrossRecorder,
    CrossScenario,
    CrossBoth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Motion,
    Random,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct SynthConfig {
    n_videos: usize,
    scenario: ScenarioConfig,
    /// Simulated annotators: boundary noise (seconds, sd) and miss rate.
    boundary_jitter_sec: f64,
    miss_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 10,
            scenario: ScenarioConfig::default(),
            boundary_jitter_sec: 1.0,
            miss_prob: 0.1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineOutput {
    method: String,
    video_id: String,
    eval_hz: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    frame_conf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predictions: Option<IntervalSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    reps: Vec<IntervalSet>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        limit_threads(n);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            config,
            out_dir,
            seed,
            n_videos,
        } => synth(config.as_deref(), &out_dir, seed, n_videos),
        Command::Aggregate { manifest, out } => aggregate_cmd(&manifest, &out),
        Command::Train {
            manifest,
            split,
            hold_out,
            model_out,
            config,
            trees,
            seed,
        } => train_cmd(
            &manifest,
            split,
            hold_out.as_deref(),
            &model_out,
            config.as_deref(),
            trees,
            seed,
        ),
        Command::Detect {
            model,
            flow,
            ratio,
            out,
            video_id,
        } => {
            let model = load_model(&model)?;
            let id = video_id.unwrap_or_else(|| fsio::stem(&flow));
            let video = fsio::read_flow(&flow, &id)?;
            let det = detect_with(&model, &video, ratio, Execution::default())?;
            fsio::write_json(&out, &det)
        }
        Command::Eval {
            pred,
            gt,
            tolerances,
            out,
            curve_csv,
        } => eval_cmd(&pred, &gt, &tolerances, &out, curve_csv.as_deref()),
        Command::Baseline {
            method,
            flow,
            out,
            ratio,
            gt,
            reps,
            seed,
            video_id,
        } => baseline_cmd(method, &flow, &out, ratio, &gt, reps, seed, video_id),
    }
}

fn synth(config: Option<&Path>, out_dir: &Path, seed: u64, n_videos: Option<usize>) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(p) => fsio::read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = n_videos {
        cfg.n_videos = n;
    }
    if cfg.n_videos == 0 {
        bail!("n_videos must be at least 1");
    }
    if !(cfg.boundary_jitter_sec >= 0.0 && (0.0..1.0).contains(&cfg.miss_prob)) {
        bail!("boundary_jitter_sec must be >= 0 and miss_prob in [0, 1)");
    }
    cfg.scenario.validate()?;
    let corpus = generate_corpus(&cfg.scenario, cfg.n_videos, seed)?;
    let eval_hz = cfg.scenario.eval_hz;
    let mut entries = Vec::with_capacity(corpus.len());
    for (i, v) in corpus.iter().enumerate() {
        let id = v.flow.video_id().to_string();
        let flow_path = format!("flow/{id}.eefl");
        let ann_path = format!("annotations/{id}.json");
        fsio::write_flow_file(&out_dir.join(&flow_path), &v.flow)?;
        let records = perturb_annotations(
            &v.track,
            cfg.scenario.n_annotators,
            cfg.boundary_jitter_sec,
            cfg.miss_prob,
            eval_hz,
            seed.wrapping_add(i as u64),
        );
        fsio::write_json(&out_dir.join(&ann_path), &records)?;
        fsio::write_json(&out_dir.join(format!("truth/{id}.json")), &v.track)?;
        entries.push(ManifestEntry {
            video_id: id,
            flow_path,
            annotation_paths: vec![ann_path],
            scenario: v.scenario.clone(),
            recorder: v.recorder.clone(),
        });
    }
    fsio::write_json(&out_dir.join("manifest.json"), &DatasetManifest::new(eval_hz, entries))?;
    println!("wrote {} videos to {}", corpus.len(), out_dir.display());
    Ok(())
}

fn aggregate_cmd(manifest: &Path, out: &Path) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let hz = data.manifest.eval_hz;
    let tracks = Execution::default().map_slice(&data.manifest.entries, |e| -> Result<ConsensusTrack> {
        let flow = data.flow(e)?;
        data.consensus(e, flow.eval_len(hz))
    });
    for t in tracks {
        let t = t?;
        fsio::write_json(&out.join(format!("{}.json", t.video_id)), &t)?;
    }
    Ok(())
}

/// Entries kept for training under `split`.
fn training_entries<'a>(
    entries: &'a [ManifestEntry],
    split: Split,
    hold_out: Option<&str>,
) -> Result<Vec<&'a ManifestEntry>> {
    let held = |e: &ManifestEntry| -> Result<bool> {
        let h = || hold_out.context("--hold-out is required with this split");
        Ok(match split {
            Split::None => false,
            Split::CrossRecorder => e.recorder == h()?,
            Split::CrossScenario => e.scenario == h()?,
            Split::CrossBoth => {
                let (r, s) = h()?
                    .split_once(':')
                    .context("cross-both hold-out must be recorder:scenario")?;
                e.recorder == r || e.scenario == s
            }
        })
    };
    if split == Split::None && hold_out.is_some() {
        bail!("--hold-out needs a split other than none");
    }
    let mut kept = Vec::new();
    let mut dropped = 0;
    for e in entries {
        if held(e)? {
            dropped += 1;
        } else {
            kept.push(e);
        }
    }
    if split != Split::None && dropped == 0 {
        bail!("hold-out {:?} matches no video", hold_out.unwrap_or_default());
    }
    if kept.is_empty() {
        bail!("training split is empty");
    }
    Ok(kept)
}

fn train_cmd(
    manifest: &Path,
    split: Split,
    hold_out: Option<&str>,
    model_out: &Path,
    config: Option<&Path>,
    trees: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let mut cfg: PipelineConfig = match config {
        Some(p) => fsio::read_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.eval_hz = data.manifest.eval_hz;
    if let Some(n) = trees {
        cfg.frame_forest.n_trees = n;
        cfg.interval_forest.n_trees = n;
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let entries = training_entries(&data.manifest.entries, split, hold_out)?;
    let loaded = Execution::default().map_slice(&entries, |e| -> Result<_> {
        let flow = data.flow(e)?;
        let track = data.consensus(e, flow.eval_len(cfg.eval_hz))?;
        Ok((flow, track))
    });
    let videos = loaded.into_iter().collect::<Result<Vec<_>>>()?;
    // the grid follows the data; mixed grids are rejected by training
    let first = &videos[0].0;
    (cfg.grid_w, cfg.grid_h) = (first.grid_w(), first.grid_h());
    let model = train_with(&videos, &cfg, Execution::default())?;
    fsio::write_atomic(model_out, model.to_json()?.as_bytes())?;
    println!("trained on {} videos", videos.len());
    Ok(())
}

fn load_model(path: &Path) -> Result<EngagementModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    EngagementModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

/// Prediction sets in a file (one for detections, tracks and bare lists,
/// several for random-baseline repetitions) and the file's `eval_hz`.
fn read_predictions(path: &Path) -> Result<(Vec<IntervalSet>, f64)> {
    let v: serde_json::Value = fsio::read_json(path)?;
    let hz = v.get("eval_hz").and_then(|h| h.as_f64()).unwrap_or(1.0);
    let field = |name: &str| v.get(name).cloned();
    let parsed = if v.is_array() {
        vec![serde_json::from_value(v.clone())?]
    } else if let Some(reps) = field("reps") {
        serde_json::from_value(reps)?
    } else if let Some(p) = field("predictions").or_else(|| field("gt")) {
        vec![serde_json::from_value(p)?]
    } else {
        bail!("{}: no predictions, gt or reps field", path.display());
    };
    Ok((parsed, hz))
}

fn eval_cmd(pred: &Path, gt: &Path, tolerances: &[f64], out: &Path, curve_csv: Option<&Path>) -> Result<()> {
    if tolerances.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!("tolerances must be finite and non-negative");
    }
    let track: ConsensusTrack = fsio::read_json(gt)?;
    let (sets, hz) = read_predictions(pred)?;
    if sets.is_empty() {
        bail!("{}: no prediction sets", pred.display());
    }
    let n = track.video_len();
    if let Some(p) = sets.iter().flat_map(|s| s.iter()).find(|p| p.end > n) {
        bail!("prediction {p} extends past the {n}-frame video");
    }
    let reports: Vec<MetricReport> = sets
        .iter()
        .map(|s| MetricReport::evaluate(s, &track.gt, n, tolerances, hz))
        .collect();
    let report = MetricReport::average(&reports);
    fsio::write_json(out, &report)?;
    if let Some(csv) = curve_csv {
        let mut buf = Vec::new();
        report.write_curve_csv(&mut buf)?;
        fsio::write_atomic(csv, &buf)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn baseline_cmd(
    method: Method,
    flow: &Path,
    out: &Path,
    ratio: f64,
    gt: &[PathBuf],
    reps: usize,
    seed: u64,
    video_id: Option<String>,
) -> Result<()> {
    let id = video_id.unwrap_or_else(|| fsio::stem(flow));
    let video = fsio::read_flow(flow, &id)?;
    let cfg = PipelineConfig::default();
    let hz = cfg.eval_hz;
    let output = match method {
        Method::Motion => {
            let conf = motion_baseline_conf(&video, cfg.sigma_seconds, hz, Execution::default());
            let (threshold, predictions) = threshold_frames(&conf, ratio, cfg.min_len)?;
            BaselineOutput {
                method: "motion".into(),
                video_id: id,
                eval_hz: hz,
                frame_conf: conf,
                threshold: Some(threshold),
                predictions: Some(predictions),
                reps: Vec::new(),
            }
        }
        Method::Random => {
            if gt.is_empty() {
                bail!("the random baseline needs --gt tracks to estimate its prior");
            }
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let tracks = gt
                .iter()
                .map(|p| fsio::read_json(p))
                .collect::<Result<Vec<ConsensusTrack>>>()?;
            let prior = RandomPrior::from_tracks(&tracks, 10);
            BaselineOutput {
                method: "random".into(),
                video_id: id,
                eval_hz: hz,
                frame_conf: Vec::new(),
                threshold: None,
                predictions: None,
                reps: baseline_random(video.eval_len(hz), &prior, reps, seed),
            }
        }
    };
    fsio::write_json(out, &output)
}

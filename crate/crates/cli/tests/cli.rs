use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use engage_core::flowgrid::write_flow;
use engage_core::groundtruth::{AnnotationMark, AnnotationRecord, Clarity};
use engage_core::pipeline::{calibrate_threshold, DetectionResult};
use engage_core::{ConsensusTrack, FlowSequence, Interval};
use serde_json::{json, Value};
use tempfile::TempDir;

fn engage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engage"))
        .args(args)
        .env("EE_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = engage(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = engage(args);
    assert_eq!(out.status.code(), Some(2), "{args:?} should exit 2");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Three 2-minute videos on a 4x3 grid at 5 fps.
fn small_corpus(dir: &Path, seed: &str) -> PathBuf {
    let cfg = dir.join("synth.json");
    let body = json!({"n_videos": 3, "scenario": {"duration_sec": 120, "fps": 5, "grid_w": 4, "grid_h": 3}});
    fs::write(&cfg, body.to_string()).unwrap();
    let out = dir.join("data");
    ok(&["synth", "--config", p(&cfg), "--out-dir", p(&out), "--seed", seed]);
    out
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

fn flow_file(path: &Path, frames: usize, value: [f64; 2]) {
    let seq = FlowSequence::from_vectors("f", 5.0, 4, 3, vec![vec![value; 12]; frames]).unwrap();
    let mut buf = Vec::new();
    write_flow(&seq, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

fn record(worker: &str, marks: &[(usize, usize)]) -> AnnotationRecord {
    let marks = marks
        .iter()
        .map(|&(start, end)| AnnotationMark {
            start,
            end,
            touched: false,
            clarity: Clarity::Obvious,
            description: String::new(),
        })
        .collect();
    AnnotationRecord::new("v", worker, 0.0, 1.0, marks)
}

/// A one-video manifest whose annotations come from `workers`.
fn hand_manifest(dir: &Path, workers: &[Vec<(usize, usize)>]) -> PathBuf {
    flow_file(&dir.join("v.eefl"), 500, [1.0, 0.0]);
    let records: Vec<AnnotationRecord> = workers
        .iter()
        .enumerate()
        .map(|(i, m)| record(&format!("w{i}"), m))
        .collect();
    fs::write(dir.join("ann.json"), serde_json::to_string(&records).unwrap()).unwrap();
    let manifest = json!({
        "schema": "ee-manifest/1",
        "eval_hz": 1.0,
        "split_keys": ["recorder", "scenario"],
        "entries": [{"video_id": "v", "flow_path": "v.eefl", "annotation_paths": ["ann.json"],
                     "scenario": "s", "recorder": "r"}]
    });
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_string()).unwrap();
    path
}

#[test]
fn help_lists_every_command() {
    let text = ok(&["--help"]);
    for cmd in ["synth", "aggregate", "train", "detect", "eval", "baseline"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(ok(&["train", "--help"]).contains("--hold-out"));
}

#[test]
fn synth_is_reproducible_and_writes_a_valid_manifest() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let da = small_corpus(a.path(), "7");
    let db = small_corpus(b.path(), "7");
    assert_eq!(files_under(&da), files_under(&db));

    let m = read_json(&da.join("manifest.json"));
    assert_eq!(m["schema"], "ee-manifest/1");
    let entries = m["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        assert!(da.join(e["flow_path"].as_str().unwrap()).is_file());
        for ap in e["annotation_paths"].as_array().unwrap() {
            assert!(da.join(ap.as_str().unwrap()).is_file());
        }
    }
}

#[test]
fn synth_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"scenario": {"attention_ratio": 1.5}}"#).unwrap();
    let err = fails(&["synth", "--config", p(&cfg), "--out-dir", p(&dir.path().join("o"))]);
    assert!(err.contains("attention_ratio"), "{err}");
}

#[test]
fn aggregate_unanimous_and_split_votes() {
    let dir = TempDir::new().unwrap();
    let marks = vec![(10, 20), (40, 70)];
    let m = hand_manifest(dir.path(), &vec![marks.clone(); 10]);
    ok(&["aggregate", "--manifest", p(&m), "--out", p(&dir.path().join("gt"))]);
    let track: ConsensusTrack = serde_json::from_value(read_json(&dir.path().join("gt/v.json"))).unwrap();
    let want: Vec<Interval> = marks.iter().map(|&(s, e)| Interval::new(s, e).unwrap()).collect();
    assert_eq!(track.gt.intervals(), want);
    assert_eq!(track.video_len(), 100);

    let half = TempDir::new().unwrap();
    let mut workers = vec![vec![(10, 30)]; 5];
    workers.extend(vec![vec![]; 5]);
    let m = hand_manifest(half.path(), &workers);
    ok(&["aggregate", "--manifest", p(&m), "--out", p(&half.path().join("gt"))]);
    let track: ConsensusTrack = serde_json::from_value(read_json(&half.path().join("gt/v.json"))).unwrap();
    assert!(track.gt.is_empty());
}

#[test]
fn aggregate_reports_missing_files() {
    let dir = TempDir::new().unwrap();
    let m = hand_manifest(dir.path(), &[vec![(1, 5)]]);
    fs::remove_file(dir.path().join("ann.json")).unwrap();
    let err = fails(&["aggregate", "--manifest", p(&m), "--out", p(&dir.path().join("gt"))]);
    assert!(err.contains("does not exist"), "{err}");
    fails(&[
        "aggregate",
        "--manifest",
        p(&dir.path().join("nope.json")),
        "--out",
        "x",
    ]);
}

#[test]
fn train_detect_eval_round() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), "3");
    let manifest = data.join("manifest.json");
    let model = dir.path().join("model.json");
    let again = dir.path().join("again.json");
    let common = ["--manifest", p(&manifest), "--trees", "8", "--seed", "5"];

    let stdout = ok(&[
        &[
            "train",
            "--split",
            "cross-recorder",
            "--hold-out",
            "r2",
            "--model-out",
            p(&model),
        ],
        &common[..],
    ]
    .concat());
    assert!(stdout.contains("trained on 2 videos"), "{stdout}");
    ok(&[
        &[
            "train",
            "--split",
            "cross-recorder",
            "--hold-out",
            "r2",
            "--model-out",
            p(&again),
        ],
        &common[..],
    ]
    .concat());
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let det_path = dir.path().join("det.json");
    ok(&[
        "detect",
        "--model",
        p(&model),
        "--flow",
        p(&data.join("flow/video001.eefl")),
        "--out",
        p(&det_path),
    ]);
    let det: DetectionResult = serde_json::from_value(read_json(&det_path)).unwrap();
    assert_eq!(det.video_id, "video001");
    assert_eq!(det.threshold, calibrate_threshold(&det.frame_conf, 0.438).unwrap());
    for w in det.predictions.intervals().windows(2) {
        assert!(w[0].end <= w[1].start);
    }

    let gt_dir = dir.path().join("gt");
    ok(&["aggregate", "--manifest", p(&manifest), "--out", p(&gt_dir)]);
    let report = dir.path().join("report.json");
    let csv = dir.path().join("curve.csv");
    let gt = gt_dir.join("video001.json");
    ok(&[
        "eval",
        "--pred",
        p(&det_path),
        "--gt",
        p(&gt),
        "--out",
        p(&report),
        "--curve-csv",
        p(&csv),
    ]);
    let r = read_json(&report);
    let curve: Vec<f64> = r["startpoint_curve"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["f1"].as_f64().unwrap())
        .collect();
    assert_eq!(curve.len(), 10);
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 11);

    ok(&[
        "eval",
        "--pred",
        p(&gt),
        "--gt",
        p(&gt),
        "--out",
        p(&report),
        "--tolerances",
        "1,2,3",
    ]);
    let r = read_json(&report);
    assert_eq!(r["frame_f1"], 1.0);
    assert_eq!(r["boundary"]["f1"], 1.0);
    assert_eq!(r["presence"]["f1"], 1.0);
    assert!(r["startpoint_curve"].as_array().unwrap().iter().all(|c| c["f1"] == 1.0));
}

#[test]
fn train_rejects_empty_or_unknown_splits() {
    let dir = TempDir::new().unwrap();
    let m = hand_manifest(dir.path(), &[vec![(1, 5)]]);
    let out = dir.path().join("m.json");
    let err = fails(&[
        "train",
        "--manifest",
        p(&m),
        "--split",
        "cross-recorder",
        "--hold-out",
        "r",
        "--model-out",
        p(&out),
    ]);
    assert!(err.contains("empty"), "{err}");
    fails(&[
        "train",
        "--manifest",
        p(&m),
        "--split",
        "cross-scenario",
        "--hold-out",
        "zz",
        "--model-out",
        p(&out),
    ]);
    fails(&[
        "train",
        "--manifest",
        p(&m),
        "--split",
        "sideways",
        "--model-out",
        p(&out),
    ]);
    assert!(!out.exists());
}

#[test]
fn detect_rejects_grid_mismatch() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), "4");
    let model = dir.path().join("model.json");
    ok(&[
        "train",
        "--manifest",
        p(&data.join("manifest.json")),
        "--trees",
        "4",
        "--model-out",
        p(&model),
    ]);
    let other = dir.path().join("other.eefl");
    let seq = FlowSequence::from_vectors("o", 5.0, 2, 2, vec![vec![[0.0, 0.0]; 4]; 50]).unwrap();
    let mut buf = Vec::new();
    write_flow(&seq, &mut buf).unwrap();
    fs::write(&other, buf).unwrap();
    let err = fails(&[
        "detect",
        "--model",
        p(&model),
        "--flow",
        p(&other),
        "--out",
        p(&dir.path().join("d.json")),
    ]);
    assert!(err.contains("grid"), "{err}");
}

#[test]
fn baselines() {
    let dir = TempDir::new().unwrap();
    let still = dir.path().join("still.eefl");
    flow_file(&still, 300, [0.0, 0.0]);
    let out = dir.path().join("motion.json");
    ok(&["baseline", "--method", "motion", "--flow", p(&still), "--out", p(&out)]);
    let m = read_json(&out);
    let conf = m["frame_conf"].as_array().unwrap();
    assert_eq!(conf.len(), 60);
    assert!(conf.iter().all(|c| c.as_f64() == Some(1.0)));

    let m = hand_manifest(dir.path(), &vec![vec![(10, 20), (40, 52)]; 3]);
    let gt_dir = dir.path().join("gt");
    ok(&["aggregate", "--manifest", p(&m), "--out", p(&gt_dir)]);
    let rand_out = dir.path().join("random.json");
    let gt = gt_dir.join("v.json");
    ok(&[
        "baseline",
        "--method",
        "random",
        "--flow",
        p(&still),
        "--gt",
        p(&gt),
        "--seed",
        "3",
        "--out",
        p(&rand_out),
    ]);
    let r = read_json(&rand_out);
    assert_eq!(r["reps"].as_array().unwrap().len(), 10);
    ok(&[
        "eval",
        "--pred",
        p(&rand_out),
        "--gt",
        p(&gt),
        "--out",
        p(&dir.path().join("r.json")),
    ]);

    fails(&[
        "baseline",
        "--method",
        "saliency",
        "--flow",
        p(&still),
        "--out",
        p(&out),
    ]);
    fails(&["baseline", "--method", "random", "--flow", p(&still), "--out", p(&out)]);
}

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engage_core::groundtruth::{aggregate, AnnotationRecord};
use engage_core::{ConsensusTrack, FlowSequence};
use serde::{Deserialize, Serialize};

use crate::fsio;

pub const MANIFEST_SCHEMA: &str = "ee-manifest/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Relative to the manifest's directory.
    pub flow_path: String,
    pub annotation_paths: Vec<String>,
    pub scenario: String,
    pub recorder: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub eval_hz: f64,
    /// Entry fields that `train --split` can hold out on.
    pub split_keys: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(eval_hz: f64, entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            schema: MANIFEST_SCHEMA.into(),
            eval_hz,
            split_keys: vec!["recorder".into(), "scenario".into()],
            entries,
        }
    }
}

/// A manifest together with the directory its paths are relative to.
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest = fsio::read_json(path)?;
        if manifest.schema != MANIFEST_SCHEMA {
            bail!(
                "{}: schema {:?}, expected {MANIFEST_SCHEMA:?}",
                path.display(),
                manifest.schema
            );
        }
        if !(manifest.eval_hz.is_finite() && manifest.eval_hz > 0.0) {
            bail!("{}: eval_hz must be positive", path.display());
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut seen = BTreeSet::new();
        for e in &manifest.entries {
            if !seen.insert(e.video_id.as_str()) {
                bail!("duplicate video_id {:?} in manifest", e.video_id);
            }
            for p in std::iter::once(&e.flow_path).chain(&e.annotation_paths) {
                let full = root.join(p);
                if !full.is_file() {
                    bail!("{}: referenced file {} does not exist", e.video_id, full.display());
                }
            }
        }
        Ok(Dataset { root, manifest })
    }

    pub fn flow(&self, e: &ManifestEntry) -> Result<FlowSequence> {
        fsio::read_flow(&self.root.join(&e.flow_path), &e.video_id)
    }

    pub fn records(&self, e: &ManifestEntry) -> Result<Vec<AnnotationRecord>> {
        let mut out = Vec::new();
        for p in &e.annotation_paths {
            out.extend(read_records(&self.root.join(p))?);
        }
        Ok(out)
    }

    /// Consensus ground truth for one entry over `video_len` evaluation frames.
    pub fn consensus(&self, e: &ManifestEntry, video_len: usize) -> Result<ConsensusTrack> {
        let records = self.records(e)?;
        if records.is_empty() {
            bail!("{}: no annotations", e.video_id);
        }
        let min_len = (self.manifest.eval_hz - 1e-9).ceil().max(1.0) as usize;
        aggregate(&e.video_id, &records, video_len, None, min_len)
            .with_context(|| format!("aggregating {}", e.video_id))
    }
}

/// A file holding one annotation record or an array of them.
pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(AnnotationRecord),
        Many(Vec<AnnotationRecord>),
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
        OneOrMany::One(r) => vec![r],
        OneOrMany::Many(v) => v,
    };
    for r in &records {
        r.validate().with_context(|| format!("in {}", path.display()))?;
    }
    Ok(records)
}

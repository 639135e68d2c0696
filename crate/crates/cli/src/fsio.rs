//! File helpers. Every write goes to a temporary file in the target
//! directory and is renamed into place.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use engage_core::flowgrid::{ingest_flow, write_flow};
use engage_core::FlowSequence;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::NamedTempFile;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp =
        NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_flow(path: &Path, video_id: &str) -> Result<FlowSequence> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ingest_flow(BufReader::new(f), video_id).with_context(|| format!("reading flow {}", path.display()))
}

pub fn write_flow_file(path: &Path, seq: &FlowSequence) -> Result<()> {
    let mut buf = Vec::new();
    write_flow(seq, &mut buf)?;
    write_atomic(path, &buf)
}

/// File name without extension, for default video ids.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "video".into(), |s| s.to_string_lossy().into_owned())
}

//! `manifest.json`: what ran, with which settings, and what it produced.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use acl_core::training::{ExperimentConfig, TrainRecord};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// A setting the method leaves open, and the value this run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactChoice {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub config: ExperimentConfig,
    pub final_metrics: Option<TrainRecord>,
    pub checkpoint: Option<String>,
    pub artifacts: Vec<String>,
    /// Values picked for this implementation rather than prescribed by the
    /// method.
    pub artifact_choices: Vec<ArtifactChoice>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub fn artifact_choices(cfg: &ExperimentConfig) -> Vec<ArtifactChoice> {
    let e = &cfg.encoder;
    let o = &cfg.optimizer;
    let m = &cfg.metrics;
    [
        ("optimizer.kind", format!("{:?}", o.kind).to_lowercase()),
        ("optimizer.lr", o.lr.to_string()),
        ("optimizer.batch_size", o.batch_size.to_string()),
        ("training.epochs", cfg.training.epochs.to_string()),
        ("loss.margin", cfg.loss.margin.to_string()),
        ("encoder.hidden", format!("{:?}", e.hidden)),
        ("encoder.d_h", e.d_h.to_string()),
        ("encoder.h_activation", format!("{:?}", e.h_activation).to_lowercase()),
        ("encoder.head_hidden", e.head_hidden.to_string()),
        ("encoder.d_z", e.d_z.to_string()),
        ("metrics.space", format!("{:?}", m.space).to_lowercase()),
        ("metrics.tolerance_norm", format!("{:?}", m.tolerance_norm)),
        ("metrics.probe_every", m.probe_every.to_string()),
        ("metrics.probe_epochs", m.probe_epochs.to_string()),
        ("metrics.probe_lr", m.probe_lr.to_string()),
        ("data.source", format!("{:?}", cfg.data.source).to_lowercase()),
    ]
    .into_iter()
    .map(|(key, value)| ArtifactChoice { key: key.to_string(), value })
    .collect()
}

pub fn write(path: &Path, manifest: &RunManifest) -> LabResult<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| LabError::output(path, e.into()))?;
    std::fs::write(path, text + "\n").map_err(|e| LabError::output(path, e))
}

pub fn read(path: &Path) -> LabResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::data(format!("{}: {e}", path.display())))
}

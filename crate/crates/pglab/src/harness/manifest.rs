//! Run manifests: enough metadata next to the CSVs to reproduce them —
//! the exact config (plus its hash), the seeds, and per-run statuses.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;

/// SHA-256 over the config's canonical (compact) JSON form.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// What a run wrote and under which knobs. Timing lives here, not in the
/// CSVs, so the data artifacts stay byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Which runner produced this directory.
    pub command: String,
    pub artifact_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Relative paths of every data artifact written.
    pub files: Vec<String>,
    /// Per-run status lines, keyed `variant/seed`: "ok" or the failure.
    pub statuses: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(Manifest {
            command: command.to_owned(),
            artifact_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: config_hash(config)?,
            config: config.clone(),
            files: Vec::new(),
            statuses: BTreeMap::new(),
            wall_time_secs: 0.0,
        })
    }
}

/// Write `manifest.json` into `out_dir`.
pub fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

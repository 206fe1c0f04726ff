//! Run manifests: every subcommand writes exactly one `manifest.json` into
//! its output directory recording the argv, the fully resolved config, the
//! seeds in play, the tool version, SHA-256 digests of every input file and
//! wall-clock timestamps, so any run can be reproduced from its manifest
//! plus the referenced inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub version: String,
    /// Fully resolved configuration after config-file and flag merging.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest { path: path.display().to_string(), sha256: hex })
}

pub fn write_manifest(manifest: &RunManifest, out_dir: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest).expect("serializable manifest");
    std::fs::write(out_dir.join("manifest.json"), json)?;
    Ok(())
}

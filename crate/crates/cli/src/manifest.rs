//! Run manifest: configuration hash, seed, code version, wall-clock stamps
//! and the inventory of every file the run emitted. The hash covers the
//! canonical config serialization and the seed only, so identical inputs
//! hash identically regardless of when they ran.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputRecord>,
    /// Extra run facts (snapshot times, diagnostics) as free-form JSON.
    #[serde(default)]
    pub notes: serde_json::Value,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    dir: PathBuf,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(dir: &Path, config: &C, seed: u64) -> Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hasher.update(seed.to_le_bytes());
        let config_hash = format!("{:x}", hasher.finalize());
        Ok(Self {
            manifest: RunManifest {
                config_hash,
                seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix: now_unix(),
                finished_unix: 0,
                outputs: Vec::new(),
                notes: serde_json::Value::Null,
            },
            dir: dir.to_path_buf(),
        })
    }

    /// Record an already-written file (path relative to the run directory).
    pub fn record(&mut self, relative: &str) -> Result<()> {
        let bytes = std::fs::metadata(self.dir.join(relative))?.len();
        self.manifest.outputs.push(OutputRecord {
            path: relative.to_string(),
            bytes,
        });
        Ok(())
    }

    pub fn set_notes(&mut self, notes: serde_json::Value) {
        self.manifest.notes = notes;
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    /// Finish and write `manifest.json`; the manifest lists itself last with
    /// a zero size placeholder since its own length isn't known in advance.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.finished_unix = now_unix();
        self.manifest.outputs.push(OutputRecord {
            path: "manifest.json".into(),
            bytes: 0,
        });
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

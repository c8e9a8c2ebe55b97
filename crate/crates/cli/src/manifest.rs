use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use rankkeeper_core::output::write_atomic;
use serde::{Deserialize, Serialize};

/// Everything needed to re-run a command and reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64, outputs: Vec<PathBuf>, elapsed: Duration) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config).context("encoding config")?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            duration_secs: elapsed.as_secs_f64(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// `runs/sweep.csv` -> `runs/sweep.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

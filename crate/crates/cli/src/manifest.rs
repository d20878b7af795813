use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::exit::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one CLI run. Written when the run starts, rewritten with
/// the end time, status and artifacts when it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: Option<f64>,
    /// `running`, `ok`, or the failure message.
    pub status: String,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, config_hash: Option<String>, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config_hash,
            seeds,
            started: now(),
            finished: None,
            status: "running".into(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn finish(&mut self, status: impl Into<String>) {
        self.finished = Some(now());
        self.status = status.into();
    }

    /// Atomic write through a temporary sibling file.
    pub fn write(&self, dir: &Path) -> CliResult {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::exit::Failure::runtime(e.to_string()))?;
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| crate::exit::Failure::runtime(e.to_string()))
    }
}

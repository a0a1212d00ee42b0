//! Per-run record written next to a command's outputs.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;

pub const VERSION: &str = env!("HESUNET_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// flat `key=value` settings that determine the run
    pub config: String,
    pub seed: u64,
    pub float64: bool,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, float64: bool) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            config: String::new(),
            seed,
            float64,
            started: Utc::now(),
            finished: None,
            artifacts: Vec::new(),
            version: VERSION.to_string(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("run-{}.json", self.command)
    }

    /// Stamp the end time and write `run-<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.finished = Some(Utc::now());
        let path = dir.join(self.file_name());
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(path)
    }
}

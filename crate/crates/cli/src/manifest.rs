//! Per-run manifest: what ran, when, with which resolved configuration, and
//! which artifacts it produced. The manifest is the only output that carries
//! timestamps; every report next to it is deterministic given the inputs.

use crate::config::RunConfig;
use crate::util::write_json;
use serde::Serialize;
use sgno::Result;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub duration_seconds: f64,
    pub seed: u64,
    /// Absent for commands that take no run configuration (gen-data, bench).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub artifacts: Vec<String>,
    /// True only for timing reports, which vary run to run by nature.
    pub non_deterministic: bool,
}

pub struct ManifestBuilder {
    command: String,
    started: SystemTime,
    seed: u64,
    config: Option<RunConfig>,
    artifacts: Vec<String>,
    non_deterministic: bool,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> ManifestBuilder {
        ManifestBuilder {
            command: command.to_string(),
            started: SystemTime::now(),
            seed,
            config: None,
            artifacts: Vec::new(),
            non_deterministic: false,
        }
    }

    pub fn config(mut self, config: &RunConfig) -> ManifestBuilder {
        self.config = Some(config.clone());
        self
    }

    pub fn non_deterministic(mut self) -> ManifestBuilder {
        self.non_deterministic = true;
        self
    }

    pub fn artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.artifacts.push("manifest.json".to_string());
        let now = SystemTime::now();
        let to_unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let manifest = Manifest {
            command: self.command,
            argv: std::env::args().collect(),
            started_unix: to_unix(self.started),
            finished_unix: to_unix(now),
            duration_seconds: now
                .duration_since(self.started)
                .map_or(0.0, |d| d.as_secs_f64()),
            seed: self.seed,
            config: self.config,
            artifacts: self.artifacts,
            non_deterministic: self.non_deterministic,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }
}

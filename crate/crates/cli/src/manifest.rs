use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use trapsim_core::io::{sha256_hex, write_file};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one run; lists every file written next to it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub artifacts: Vec<ArtifactEntry>,
    pub wall_clock_s: f64,
}

/// Artifacts collected in memory and written in order at the end, so a run
/// that fails part way leaves nothing behind.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    started: Instant,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Write all files plus `manifest.json`.
    pub fn finish(self, command: &str, config_json: &[u8], seed: u64) -> CliResult<PathBuf> {
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            write_file(&self.dir.join(name), bytes).map_err(CliError::config)?;
            entries.push(ArtifactEntry { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_digest: sha256_hex(config_json),
            seed,
            artifacts: entries,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        write_file(&path, text.as_bytes()).map_err(CliError::config)?;
        Ok(path)
    }
}

//! Run manifests and all-or-nothing output directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    /// Every file written next to the manifest.
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_secs: f64,
}

/// SHA-256 of the compact JSON form of a resolved configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files in memory and writes them only once the command
/// has succeeded.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    /// Writes every file through a temporary name, then the manifest.
    pub fn commit(
        self,
        command: &str,
        config_hash: String,
        seeds: Vec<u64>,
        inputs: &[PathBuf],
    ) -> Result<(), CliError> {
        let io = |e: anyhow::Error| CliError { code: 5, source: e };
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))
            .map_err(io)?;
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash,
            seeds,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.files.iter().map(|(n, _)| n.clone()).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let manifest = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        for (name, bytes) in self.files.iter().chain([&(MANIFEST.to_string(), manifest)]) {
            let target = self.dir.join(name);
            let tmp = self.dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes)
                .and_then(|()| fs::rename(&tmp, &target))
                .with_context(|| format!("writing {}", target.display()))
                .map_err(io)?;
        }
        Ok(())
    }
}

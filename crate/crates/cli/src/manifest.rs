//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputFile>,
    /// Effective settings, defaults included.
    pub config: Value,
    /// SHA-256 of the command, the settings and the input hashes.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub summary: Value,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub struct Recorder {
    command: String,
    inputs: Vec<InputFile>,
    config: Value,
    seed: Option<u64>,
    started: u64,
}

impl Recorder {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            config,
            seed,
            started: now(),
        }
    }

    pub fn set_config(&mut self, config: Value, seed: Option<u64>) {
        self.config = config;
        self.seed = seed;
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    pub fn finish(self, summary: Value) -> RunManifest {
        let hashed = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs.iter().map(|i| &i.sha256).collect::<Vec<_>>(),
            "seed": self.seed,
        });
        RunManifest {
            config_hash: sha256_hex(hashed.to_string().as_bytes()),
            command: self.command,
            inputs: self.inputs,
            config: self.config,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: now(),
            summary,
        }
    }
}

pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `content` to `out` plus its manifest sidecar, or to stdout.
pub fn emit(out: Option<&Path>, content: &str, manifest: RunManifest) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
            write_manifest(path, &manifest)
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let path = sidecar(out);
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

//! Run manifests: enough to re-run a command and check its outputs bit-exactly.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

impl RunManifest {
    pub fn new(command: String, seed: u64, config: serde_json::Value, started_unix: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            started_unix,
            finished_unix: 0,
            config,
            artifacts: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) -> std::io::Result<()> {
        self.artifacts.push(Artifact {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finished_unix = unix_now();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

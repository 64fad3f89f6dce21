use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::failure::Outcome;
use crate::store::{sha256_file, sha256_hex, write_file};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Outcome<Self> {
        Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

/// Record of one command run: what went in, what came out, and the fully
/// resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON form of `config`.
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start<C: Serialize>(command: &str, config: &C) -> Outcome<Self> {
        let config = serde_json::to_value(config)?;
        let config_digest = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                config_digest,
                seeds: Vec::new(),
                inputs: Vec::new(),
                artifacts: Vec::new(),
                started: now(),
                finished: 0,
            },
        })
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        if !self.manifest.seeds.contains(&seed) {
            self.manifest.seeds.push(seed);
        }
        self
    }

    pub fn input(&mut self, path: &Path) -> Outcome<&mut Self> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn artifact(&mut self, path: &Path) -> Outcome<&mut Self> {
        self.manifest.artifacts.push(FileDigest::of(path)?);
        Ok(self)
    }

    pub fn finish(mut self, path: &Path) -> Outcome<RunManifest> {
        self.manifest.finished = now();
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_file(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(path: &Path) -> Outcome<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

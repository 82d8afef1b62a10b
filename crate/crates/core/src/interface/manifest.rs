//! `manifest.json`: what was run, when, and the hash of every output file.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("hash mismatch for {0}")]
    HashMismatch(String),
    #[error("listed file {0} is missing")]
    MissingFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Configuration text exactly as supplied.
    pub config: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: Option<f64>,
    pub status: Status,
    pub message: Option<String>,
    pub files: Vec<FileEntry>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ExperimentManifest {
    pub fn begin(config: &str) -> Self {
        Self {
            config: config.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: now_unix(),
            finished: None,
            status: Status::Incomplete,
            message: None,
            files: Vec::new(),
        }
    }

    /// Hashes `names` inside `dir` and replaces the file list, sorted by name.
    pub fn record_files(&mut self, dir: &Path, names: &[String]) -> Result<(), ManifestError> {
        let mut files = names
            .iter()
            .map(|n| {
                Ok(FileEntry {
                    name: n.clone(),
                    sha256: sha256_hex(&fs::read(dir.join(n))?),
                })
            })
            .collect::<Result<Vec<_>, ManifestError>>()?;
        files.sort_by(|a, b| a.name.cmp(&b.name));
        files.dedup_by(|a, b| a.name == b.name);
        self.files = files;
        Ok(())
    }

    pub fn finish(&mut self, status: Status, message: Option<String>) {
        self.finished = Some(now_unix());
        self.status = status;
        self.message = message;
    }

    pub fn write(&self, dir: &Path) -> Result<(), ManifestError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }

    /// Checks every listed file against its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<(), ManifestError> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.name)).map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => ManifestError::MissingFile(f.name.clone()),
                _ => ManifestError::Io(e),
            })?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(ManifestError::HashMismatch(f.name.clone()));
            }
        }
        Ok(())
    }
}

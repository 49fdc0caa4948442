//! JSON run manifests listing every artifact with its SHA-256.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl OutputFile {
    /// Hashes a file as it is on disk now.
    pub fn hash(path: &Path) -> AppResult<Self> {
        let data = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Ok(OutputFile {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config: Value,
    pub config_sha256: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub runtime_seconds: f64,
    /// Grid definition or session shape, depending on the subcommand.
    pub grid: Value,
    /// Derived results worth reading without opening the CSVs.
    pub summary: Value,
    /// Grid points that did not complete cleanly.
    pub incomplete: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: Value, started: DateTime<Utc>) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            config,
            config_sha256,
            started,
            finished: started,
            runtime_seconds: 0.0,
            grid: Value::Null,
            summary: Value::Null,
            incomplete: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) -> AppResult<()> {
        self.outputs.push(OutputFile::hash(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> AppResult<()> {
        self.finished = Utc::now();
        self.runtime_seconds = (self.finished - self.started).num_milliseconds() as f64 / 1e3;
        let text = serde_json::to_string_pretty(&self).map_err(|e| AppError::io(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_hashed_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.csv");
        std::fs::write(&out, "x\n1\n").unwrap();
        let mut m = RunManifest::new("sweep", 3, serde_json::json!({"k": 1}), Utc::now());
        m.add_output(&out).unwrap();
        let path = dir.path().join("manifest.json");
        m.finish(&path).unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(v["outputs"][0]["sha256"], sha256_hex(b"x\n1\n"));
        assert_eq!(v["outputs"][0]["bytes"], 4);
    }
}

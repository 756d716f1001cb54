//! Output files: CSV tables, JSON sidecars and the run manifest.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    #[serde(rename = "$schema")]
    pub schema: &'static str,
    pub command: String,
    /// SHA-256 of the compact JSON encoding of `resolved_config`.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub artifact_version: &'static str,
    pub outputs: Vec<String>,
    pub resolved_config: Value,
}

pub fn digest(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects files written by one command and finishes with the manifest.
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn finish(mut self, command: &str, seed: Option<u64>, resolved: Value) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            schema: "phasenoise/manifest/v1",
            command: command.to_string(),
            config_digest: digest(&resolved),
            seed,
            artifact_version: ARTIFACT_VERSION,
            outputs: self.written.clone(),
            resolved_config: resolved,
        };
        let path = self.path("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

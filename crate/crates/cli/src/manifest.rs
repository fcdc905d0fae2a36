//! Run manifests: enough provenance to rerun a run and check its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Assignment;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

impl OutputFile {
    pub fn describe(file: &str, contents: &[u8]) -> Self {
        OutputFile {
            file: file.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub filter: String,
    /// Every resolved configuration value, keyed by config path.
    pub config: BTreeMap<String, String>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per assimilation cycle; informational only.
    pub cycle_seconds: Vec<f64>,
}

impl Manifest {
    pub fn output(&self, file: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|o| o.file == file)
    }

    /// The configuration as assignments, for re-resolution.
    pub fn assignments(&self, origin: &str) -> Vec<Assignment> {
        self.config
            .iter()
            .map(|(k, v)| Assignment::new(k.as_str(), v.as_str(), origin))
            .collect()
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Runtime(format!("cannot serialize manifest: {e}")))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::ConfigGeneral(format!("{}: not a run manifest: {e}", path.display()))
        })
    }

    /// Read `manifest.json` from a run directory.
    pub fn read_dir(dir: &Path) -> CliResult<Self> {
        Self::read(&dir.join(MANIFEST_FILE))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use motionmask::config::Config;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ARTIFACT_FORMAT: u32 = 1;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub artifact_format_version: u32,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            artifact_format_version: ARTIFACT_FORMAT,
            command: command.to_string(),
            config: config.to_map(),
            seed: config.seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Hashes the listed files (relative to `out`) and writes `manifest.json`
    /// with sorted keys.
    pub fn finish(mut self, out: &Path, files: &[PathBuf]) -> Result<(), CliError> {
        for f in files {
            let key = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
            self.outputs.insert(key, sha256_file(f)?);
        }
        let value = serde_json::to_value(&self).map_err(|e| CliError::Input(e.to_string()))?;
        let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Input(e.to_string()))?;
        let path = out.join("manifest.json");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

//! Run manifests: config echo, content hashes of inputs, artifact paths.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of a file's bytes, hex encoded.
pub fn content_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("hashing input {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut acc, b| {
        use std::fmt::Write;
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// A reproducibility manifest written next to every command's outputs.
/// Deliberately contains no timestamps so reruns are byte-identical.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_star_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stepsize_warning: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            eta_used: None,
            f_star_used: None,
            stepsize_warning: None,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_hashes
            .insert(path.display().to_string(), content_hash(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

//! Run manifests: enough to reproduce a command's outputs byte for byte.
//!
//! Files are identified by name and content hash rather than by path, so a
//! manifest does not depend on where the run happened.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// Hash of `parameters` as serialized here.
    pub config_sha256: String,
    pub parameters: Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn entry(role: &str, path: &Path) -> anyhow::Result<FileEntry> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(FileEntry {
        role: role.to_string(),
        file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, parameters: impl Serialize) -> anyhow::Result<Self> {
        let parameters = serde_json::to_value(parameters)?;
        let config_sha256 = sha256_hex(&serde_json::to_vec(&parameters)?);
        Ok(Self {
            tool: "domainsynth",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(entry(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(entry(role, path)?);
        Ok(())
    }

    pub fn summary(&mut self, summary: impl Serialize) -> anyhow::Result<()> {
        self.summary = serde_json::to_value(summary)?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        write_json(path, self)
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

//! Run manifests: what was run, on which bytes, against which backends.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::PROTOCOL_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub role: String,
    pub spec: String,
    pub protocol: String,
}

impl BackendIdentity {
    pub fn new(role: impl Into<String>, spec: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            spec: spec.into(),
            protocol: PROTOCOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<InputFile>,
    pub backends: Vec<BackendIdentity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub timestamp: String,
    pub tool_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            args,
            inputs: Vec::new(),
            backends: Vec::new(),
            variant: None,
            seed: None,
            parallelism: 1,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Record an input file together with the hash of its current bytes.
    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn add_backend(&mut self, role: &str, spec: &str) {
        self.backends.push(BackendIdentity::new(role, spec));
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        json.push('\n');
        fs::write(path, json)
    }
}

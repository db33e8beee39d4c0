//! Run manifests: what was run, with which configuration, seeds and inputs,
//! and digests of what it wrote. Manifests carry no timestamps or absolute
//! paths, so repeating a run reproduces the manifest byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub command: String,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub arguments: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config_json: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("imcal-cli", env!("CARGO_PKG_VERSION"));
        versions.insert("imcal-core", imcal_core::VERSION);
        Self {
            tool: "imcal",
            command: command.to_string(),
            versions,
            config_sha256: sha256_hex(config_json.as_bytes()),
            config: serde_json::from_str(config_json).unwrap_or(serde_json::Value::Null),
            seeds: BTreeMap::new(),
            arguments: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn argument(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.arguments.insert(name.to_string(), value.to_string());
        self
    }

    /// Record an input by file name; directories are left out so the
    /// manifest does not depend on where the run happened.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let sha256 = file_sha256(path)?;
        self.inputs.push(FileDigest {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256,
        });
        Ok(self)
    }

    /// Record an output file by its name inside `dir`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<&mut Self> {
        let sha256 = file_sha256(&dir.join(name))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256,
        });
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

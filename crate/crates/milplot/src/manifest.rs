//! Run manifests: every command records its arguments, config snapshot,
//! seed, inputs, and emitted artifacts with content hashes.
//!
//! Artifacts carrying wall-clock timings are listed with `sha256: null` so
//! that deterministic runs produce byte-identical manifests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArtifactEntry {
    pub path: String,
    /// Hex digest; None for artifacts whose bytes are not reproducible
    /// (per-bag timing reports).
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn add_input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Record an emitted file, hashing its current on-disk contents.
    pub fn add_output(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        self.outputs.push(ArtifactEntry {
            path: file_name(path),
            sha256: Some(sha256_hex(&bytes)),
        });
        Ok(())
    }

    /// Record an emitted file without a hash (timing data and similar
    /// nondeterministic content).
    pub fn add_unhashed_output(&mut self, path: &Path) {
        self.outputs.push(ArtifactEntry {
            path: file_name(path),
            sha256: None,
        });
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Directory artifacts as (name, hash) pairs, for determinism checks.
pub fn hashed_outputs(manifest: &RunManifest) -> Vec<(String, String)> {
    manifest
        .outputs
        .iter()
        .filter_map(|a| a.sha256.as_ref().map(|h| (a.path.clone(), h.clone())))
        .collect()
}

/// Where a command's manifest lives inside its output directory.
pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("run_manifest.json")
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polyinv_core::repro::bytes_hash;
use serde::Serialize;

pub const MANIFEST_SCHEMA: &str = "polyinv-manifest/1";

/// Sidecar written next to every set of artifacts. Timing-free, so two runs
/// with the same inputs produce the same manifest.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// SHA-256 of each written file, by file name.
    pub files: BTreeMap<String, String>,
}

pub struct ArtifactDir {
    dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactDir {
    pub fn create(dir: &Path, command: &str, config_hash: String, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                schema: MANIFEST_SCHEMA,
                command: command.into(),
                config_hash,
                seed,
                files: BTreeMap::new(),
            },
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.files.insert(name.into(), bytes_hash(bytes));
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Comma-separated numbers, as given on the command line.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect()
}

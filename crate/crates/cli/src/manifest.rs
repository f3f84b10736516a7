//! Run manifests: the resolved config, the seed and content hashes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub master_seed: u64,
    pub seed_source: String,
    pub config: ScenarioConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes of every file under `dir` except the manifest, sorted by path.
pub fn hash_outputs(dir: &Path) -> Result<Vec<FileHash>, CliError> {
    let mut files = Vec::new();
    walk(dir, &mut files).map_err(|e| CliError::Usage(format!("cannot list {}: {e}", dir.display())))?;
    files.sort();
    files
        .iter()
        .filter(|p| p.strip_prefix(dir).map(|r| r != Path::new(MANIFEST_FILE)).unwrap_or(true))
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            Ok(FileHash { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_file(p)? })
        })
        .collect()
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(dsrank::Error::from)?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
    }
}

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Provenance block embedded in every structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every resolved parameter, defaults included.
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path (as given) to hex SHA-256 of its bytes.
    pub inputs: IndexMap<String, String>,
    pub version: String,
}

impl RunManifest {
    pub fn new<P: Serialize>(command: &str, params: &P, seeds: Vec<u64>) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            params: serde_json::to_value(params).context("serializing parameters")?,
            seeds,
            inputs: IndexMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn with_input(mut self, path: &Path, bytes: &[u8]) -> Self {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an input file, returning its text alongside the raw bytes for
/// digesting.
pub fn read_input(path: &Path) -> Result<(String, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok((text, bytes))
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

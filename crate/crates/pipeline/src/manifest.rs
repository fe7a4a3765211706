//! Append-only JSON-lines record of pipeline runs and artifact hashes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Relative to the output root.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: String,
    pub config_hash: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_clock_secs: f64,
    pub seeds: BTreeMap<String, u64>,
    pub reports: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Hash of a file, or of a directory as the sorted list of its files'
/// relative paths and hashes.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_file() {
        return Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(sha256_hex(&fs::read(path.join(&f))?).as_bytes());
        hasher.update(*b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn artifact(root: &Path, rel: &str) -> Result<Artifact> {
    Ok(Artifact {
        path: rel.to_string(),
        sha256: hash_path(&root.join(rel))?,
    })
}

/// Every record in `root`'s manifest, oldest first.
pub fn read_manifest(root: &Path) -> Result<Vec<RunManifest>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(&path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).context("malformed manifest line"))
        .collect()
}

/// Appends `record`, numbering its run id after the existing records.
pub fn append(root: &Path, mut record: RunManifest) -> Result<RunManifest> {
    let n = read_manifest(root)?.len();
    record.run_id = format!("{n:04}-{}-{}", record.stage, &record.config_hash[..12]);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(root.join(MANIFEST_FILE))?;
    writeln!(file, "{}", serde_json::to_string(&record)?)?;
    Ok(record)
}

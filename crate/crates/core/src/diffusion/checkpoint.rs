//! Checkpoint directory: `manifest.json` plus a little-endian `f32` blob
//! `params.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::ConditioningLayout;
use super::net::{DenoiserNet, NetConfig};
use super::nn::ParamEntry;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: u32,
    /// Which model the network belongs to, e.g. `deflicker`.
    pub kind: String,
    pub net: NetConfig,
    pub layout: ConditioningLayout,
    pub schedule: NoiseSchedule,
    pub patch: usize,
    /// `[frames, height, width]` of the training videos.
    pub train_dims: [usize; 3],
    pub seeds: BTreeMap<String, u64>,
    /// Free-form training record (iterations, final loss, dataset).
    pub provenance: serde_json::Value,
    pub tensors: Vec<ParamEntry>,
}

pub fn save_checkpoint(dir: &Path, net: &DenoiserNet<f32>, mut manifest: CheckpointManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    manifest.format = FORMAT_VERSION;
    manifest.net = net.config().clone();
    manifest.layout = net.layout().clone();
    manifest.schedule = net.schedule().clone();
    manifest.tensors = net.table().entries().to_vec();
    let blob: Vec<u8> = net.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(PARAMS_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(DenoiserNet<f32>, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", manifest.format)));
    }
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() % 4 != 0 {
        return Err(Error::Checkpoint("parameter blob is not a whole number of f32 values".into()));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let net = DenoiserNet::from_params(manifest.net.clone(), manifest.layout.clone(), manifest.schedule.clone(), params)?;
    if net.table().entries() != manifest.tensors.as_slice() {
        return Err(Error::Checkpoint("tensor table does not match the architecture".into()));
    }
    Ok((net, manifest))
}

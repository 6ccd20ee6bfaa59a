//! Dataset and checkpoint files.
//!
//! Datasets are JSON. Checkpoints are a JSON header plus a sidecar of
//! little-endian `f64` parameter blocks; the header records each block's
//! shape and the sidecar's length and SHA-256.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{Dataset, DATASET_VERSION};
use crate::error::{Error, Result};
use crate::learncore::{Activation, Mlp};
use crate::task::TaskSpace;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<String> {
    let bytes = serde_json::to_vec(dataset)?;
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Loads a dataset and the SHA-256 of its file.
pub fn load_dataset(path: &Path) -> Result<(Dataset, String)> {
    let bytes = read(path, "collect")?;
    let ds: Dataset = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    if ds.meta.format_version != DATASET_VERSION {
        return Err(Error::format(
            path,
            format!("dataset version {} (expected {DATASET_VERSION})", ds.meta.format_version),
        ));
    }
    ds.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok((ds, sha256_hex(&bytes)))
}

fn read(path: &Path, stage: &'static str) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact {
            stage,
            path: path.to_path_buf(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMeta {
    pub name: String,
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Offset into the sidecar, in values.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Stage that wrote the checkpoint, e.g. `pre-tmo`.
    pub provenance: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub duration: f64,
    pub dof: usize,
    pub space: Option<TaskSpace>,
    pub blocks: Vec<BlockMeta>,
    pub sidecar: String,
    pub sidecar_len: usize,
    pub sidecar_sha256: String,
}

/// Named networks with the metadata needed to rebuild models.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub provenance: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub duration: f64,
    pub dof: usize,
    pub space: Option<TaskSpace>,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::InvalidModel(format!("checkpoint has no `{name}` block")))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("bin")
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let side = sidecar_path(path);
    let mut bytes = Vec::new();
    let mut blocks = Vec::with_capacity(ck.nets.len());
    let mut offset = 0;
    for (name, net) in &ck.nets {
        for v in net.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        blocks.push(BlockMeta {
            name: name.clone(),
            widths: net.widths().to_vec(),
            activation: net.activation(),
            offset,
            len: net.num_params(),
        });
        offset += net.num_params();
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        provenance: ck.provenance.clone(),
        config_hash: ck.config_hash.clone(),
        dataset_hash: ck.dataset_hash.clone(),
        duration: ck.duration,
        dof: ck.dof,
        space: ck.space.clone(),
        blocks,
        sidecar: side
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sidecar_len: bytes.len(),
        sidecar_sha256: sha256_hex(&bytes),
    };
    write_atomic(&side, &bytes)?;
    write_atomic(path, &serde_json::to_vec_pretty(&header)?)
}

/// Loads a checkpoint written by [`save_checkpoint`]. `stage` names the
/// command that produces it, for missing-file errors.
pub fn load_checkpoint(path: &Path, stage: &'static str) -> Result<Checkpoint> {
    let header: CheckpointHeader =
        serde_json::from_slice(&read(path, stage)?).map_err(|e| Error::format(path, e.to_string()))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", header.format_version),
        ));
    }
    let side = path.with_file_name(&header.sidecar);
    let bytes = read(&side, stage)?;
    if bytes.len() != header.sidecar_len {
        return Err(Error::format(
            &side,
            format!("sidecar holds {} bytes, header expects {}", bytes.len(), header.sidecar_len),
        ));
    }
    if sha256_hex(&bytes) != header.sidecar_sha256 {
        return Err(Error::format(&side, "sidecar hash mismatch"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut nets = Vec::with_capacity(header.blocks.len());
    for b in &header.blocks {
        let block = values
            .get(b.offset..b.offset + b.len)
            .ok_or_else(|| Error::format(path, format!("block `{}` exceeds the sidecar", b.name)))?;
        let net = Mlp::from_params(&b.widths, b.activation, block.to_vec())
            .map_err(|e| Error::format(path, format!("block `{}`: {e}", b.name)))?;
        nets.push((b.name.clone(), net));
    }
    Ok(Checkpoint {
        provenance: header.provenance,
        config_hash: header.config_hash,
        dataset_hash: header.dataset_hash,
        duration: header.duration,
        dof: header.dof,
        space: header.space,
        nets,
    })
}

//! Binary checkpoint: magic, little-endian u32 header length, JSON header,
//! then every parameter value as little-endian f64 in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LossConfig, ModelConfig, Task};
use super::network::CorrModel;
use super::CorrError;
use crate::tensornet::{ParameterStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"ACORR1\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CorrModel,
    pub loss: LossConfig,
    pub seed: u64,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    task: Task,
    config: ModelConfig,
    loss: LossConfig,
    seed: u64,
    step: u64,
    params: Vec<ParamEntry>,
}

pub fn write_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        task: ck.model.config.task,
        config: ck.model.config.clone(),
        loss: ck.loss,
        seed: ck.seed,
        step: ck.step,
        params: ck.model.store.iter().map(|(n, t)| ParamEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(11 + json.len() + 8 * ck.model.store.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in ck.model.store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint. With `expected` set, a checkpoint for another task
/// is a version mismatch.
pub fn read_checkpoint(bytes: &[u8], expected: Option<Task>) -> Result<Checkpoint, CorrError> {
    let corrupt = |m: &str| CorrError::CorruptFile(m.to_string());
    if bytes.len() < 11 || &bytes[..7] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let hlen = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let body = &bytes[11..];
    if body.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| CorrError::CorruptFile(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(CorrError::VersionMismatch(format!(
            "file version {}, supported {CHECKPOINT_VERSION}",
            header.version
        )));
    }
    if header.task != header.config.task {
        return Err(corrupt("task tag disagrees with config"));
    }
    if let Some(t) = expected {
        if t != header.task {
            return Err(CorrError::VersionMismatch(format!("checkpoint task {}, expected {t}", header.task)));
        }
    }
    header.config.validate().map_err(|e| CorrError::CorruptFile(e.to_string()))?;
    let total: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let values = &body[hlen..];
    if values.len() != total * 8 {
        return Err(CorrError::CorruptFile(format!("expected {} value bytes, found {}", total * 8, values.len())));
    }
    let mut store = ParameterStore::new();
    let mut off = 0;
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        let data = values[off * 8..(off + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        off += n;
        store.insert(&p.name, Tensor::new(p.shape.clone(), data)?)?;
    }
    // the parameter table must match what the config builds
    let reference = CorrModel::new(header.config.clone(), 0)?;
    let same_layout = reference.store.len() == store.len()
        && reference
            .store
            .iter()
            .all(|(n, t)| store.get(n).is_some_and(|s| s.shape() == t.shape()));
    if !same_layout {
        return Err(corrupt("parameter table does not match the model config"));
    }
    Ok(Checkpoint { model: CorrModel { config: header.config, store }, loss: header.loss, seed: header.seed, step: header.step })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CorrError> {
    fs::write(path, write_checkpoint(ck)).map_err(|e| CorrError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_checkpoint(path: &Path, expected: Option<Task>) -> Result<Checkpoint, CorrError> {
    let bytes = fs::read(path).map_err(|e| CorrError::Io { path: path.to_path_buf(), source: e })?;
    read_checkpoint(&bytes, expected)
}

//! Parameter checkpoints: `manifest.json` plus little-endian `params.bin`.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::Float;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into `params.bin`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: Vec<ManifestEntry>,
}

pub fn save<F: Float>(store: &ParamStore<F>, dir: &Path) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let mut params = Vec::new();
    for (_, p) in store.iter() {
        params.push(ManifestEntry { name: p.name.clone(), shape: p.tensor.shape().to_vec(), dtype: F::DTYPE.into(), offset: bytes.len() });
        for &v in p.tensor.data() {
            v.write_le(&mut bytes);
        }
    }
    let manifest = serde_json::to_string_pretty(&Manifest { params }).map_err(|e| CheckpointError::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST), manifest)?;
    fs::write(dir.join(PARAMS), bytes)?;
    Ok(())
}

pub fn load<F: Float>(dir: &Path) -> Result<ParamStore<F>, CheckpointError> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let bytes = fs::read(dir.join(PARAMS))?;
    let mut store = ParamStore::new();
    for e in manifest.params {
        let n: usize = e.shape.iter().product();
        let data: Vec<F> = match e.dtype.as_str() {
            "f32" => read_block::<f32>(&bytes, e.offset, n, &e.name)?.into_iter().map(|v| F::lit(f64::from(v))).collect(),
            "f64" => read_block::<f64>(&bytes, e.offset, n, &e.name)?.into_iter().map(F::lit).collect(),
            other => return Err(CheckpointError::Format(format!("{}: unknown dtype {other}", e.name))),
        };
        let t = Tensor::new(&e.shape, data).map_err(|err| CheckpointError::Format(err.to_string()))?;
        store.add(e.name, t).map_err(|err| CheckpointError::Format(err.to_string()))?;
    }
    Ok(store)
}

fn read_block<G: Float>(bytes: &[u8], offset: usize, n: usize, name: &str) -> Result<Vec<G>, CheckpointError> {
    let end = offset + n * G::BYTES;
    let block = bytes
        .get(offset..end)
        .ok_or_else(|| CheckpointError::Format(format!("{name}: bytes {offset}..{end} beyond file of {}", bytes.len())))?;
    Ok(block.chunks_exact(G::BYTES).map(G::read_le).collect())
}

//! Binary weight container.
//!
//! ```text
//! b"PSRW"            magic
//! u32 LE             format version (1)
//! u32 LE             header length in bytes
//! header             JSON: {"config", "flatten_order", "tensors": [{name, shape, offset}]}
//! u64 LE             parameter count
//! f64 LE * count     values, tensors back to back in header order
//! ```

use std::fs;
use std::path::Path;

use psrcast_core::nnet::{ModelConfig, ModelWeights, TensorSpec, FLATTEN_ORDER};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"PSRW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated weight file")]
    Truncated,
    #[error("{0} trailing bytes after the values")]
    TrailingBytes(usize),
    #[error("header: {0}")]
    Header(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    flatten_order: String,
    tensors: Vec<TensorSpec>,
}

pub fn encode(weights: &ModelWeights) -> Vec<u8> {
    let header = Header {
        config: weights.config().clone(),
        flatten_order: FLATTEN_ORDER.to_string(),
        tensors: weights.specs(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let values = weights.values();
    let mut out = Vec::with_capacity(20 + json.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], WeightsError> {
    if bytes.len() < n {
        return Err(WeightsError::Truncated);
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode(mut bytes: &[u8]) -> Result<ModelWeights, WeightsError> {
    let b = &mut bytes;
    if take(b, 4)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u32::from_le_bytes(take(b, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let hlen = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(b, hlen)?).map_err(|e| WeightsError::Header(e.to_string()))?;
    if header.flatten_order != FLATTEN_ORDER {
        return Err(WeightsError::Header(format!("flatten order {:?}", header.flatten_order)));
    }
    let count = u64::from_le_bytes(take(b, 8)?.try_into().unwrap()) as usize;
    let raw = take(b, count.checked_mul(8).ok_or(WeightsError::Truncated)?)?;
    if !b.is_empty() {
        return Err(WeightsError::TrailingBytes(b.len()));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let weights = ModelWeights::from_parts(header.config, values).map_err(|e| WeightsError::Invalid(e.to_string()))?;
    if weights.specs() != header.tensors {
        return Err(WeightsError::Header("tensor table does not match the config".into()));
    }
    Ok(weights)
}

pub fn save(path: &Path, weights: &ModelWeights) -> std::io::Result<()> {
    fs::write(path, encode(weights))
}

pub fn load(path: &Path) -> Result<ModelWeights, WeightsError> {
    decode(&fs::read(path)?)
}

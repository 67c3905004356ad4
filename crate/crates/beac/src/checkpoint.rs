//! Model checkpoints: a `u64` little-endian header length, a JSON header
//! `{format_version, model, tensors: {name: {shape, dtype, byte_offset}}}`,
//! then the raw little-endian tensor payload. Offsets are relative to the
//! start of the payload; tensors are stored in parameter order.

use std::collections::BTreeMap;
use std::path::Path;

use beac_core::model::{Model, ModelConfig};
use beac_core::params::ParamStore;
use beac_core::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;
/// Refuse headers above this size instead of allocating for garbage input.
const MAX_HEADER: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub model: ModelConfig,
    pub tensors: BTreeMap<String, TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint shorter than its declared layout ({0})")]
    Truncated(&'static str),
    #[error("checkpoint header of {0} bytes exceeds the limit")]
    HeaderTooLarge(u64),
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("tensor {name}: dtype {found}, expected {expected}")]
    Dtype { name: String, found: String, expected: &'static str },
    #[error("tensor {name}: shape {found:?}, model expects {expected:?}")]
    Shape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
    #[error("checkpoint has tensors the model does not use: {0:?}")]
    Unexpected(Vec<String>),
    #[error("tensor {0} lies outside the payload")]
    OutOfBounds(String),
    #[error("checkpoint payload has {0} unreferenced trailing bytes")]
    Trailing(u64),
    #[error("invalid model: {0}")]
    Model(#[from] beac_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut tensors = BTreeMap::new();
    let mut payload = Vec::new();
    for (name, t) in model.params().iter() {
        tensors.insert(
            name.to_string(),
            TensorEntry {
                shape: t.shape().to_vec(),
                dtype: T::DTYPE.to_string(),
                byte_offset: payload.len() as u64,
            },
        );
        for &v in t.data() {
            v.write_le(&mut payload);
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        model: *model.config(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8]), CheckpointError> {
    let len_bytes: [u8; 8] = bytes.get(..8).ok_or(CheckpointError::Truncated("length prefix"))?.try_into().expect("8");
    let n = u64::from_le_bytes(len_bytes);
    if n > MAX_HEADER {
        return Err(CheckpointError::HeaderTooLarge(n));
    }
    let end = 8 + n as usize;
    let json = bytes.get(8..end).ok_or(CheckpointError::Truncated("header"))?;
    let header: Header = serde_json::from_slice(json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    Ok((header, &bytes[end..]))
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, CheckpointError> {
    let (header, payload) = decode_header(bytes)?;
    // the freshly built model fixes names, order and shapes
    let template = Model::<T>::init(header.model, &mut beac_core::rng_from_seed(0))?;
    let mut store = ParamStore::new();
    let mut used = 0u64;
    for (name, t) in template.params().iter() {
        let e = header.tensors.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if e.dtype != T::DTYPE {
            return Err(CheckpointError::Dtype {
                name: name.to_string(),
                found: e.dtype.clone(),
                expected: T::DTYPE,
            });
        }
        if e.shape != t.shape() {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                found: e.shape.clone(),
                expected: t.shape().to_vec(),
            });
        }
        let start = e.byte_offset as usize;
        let size = t.len() * T::BYTES;
        let raw = payload
            .get(start..start + size)
            .ok_or_else(|| CheckpointError::OutOfBounds(name.to_string()))?;
        let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        store.insert(name, Tensor::new(t.shape(), data)?);
        used += size as u64;
    }
    let extra: Vec<String> = header
        .tensors
        .keys()
        .filter(|k| template.params().id(k).is_none())
        .cloned()
        .collect();
    if !extra.is_empty() {
        return Err(CheckpointError::Unexpected(extra));
    }
    if (payload.len() as u64) > used {
        return Err(CheckpointError::Trailing(payload.len() as u64 - used));
    }
    Ok(Model::from_params(header.model, &store)?)
}

pub fn save<T: Scalar>(path: &Path, model: &Model<T>) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>, CheckpointError> {
    decode(&std::fs::read(path)?)
}

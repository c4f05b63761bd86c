//! Named-tensor container shared by checkpoints and preprocessed archives.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "PCVTENS\0"
//! version    u32
//! header_len u64
//! header     header_len bytes of UTF-8 JSON:
//!            {"metadata": {...}, "tensors": [{"name", "dtype", "shape", "offset", "length"}, ...]}
//! payload    raw little-endian tensor data; offsets are relative to payload start
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"PCVTENS\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TensorFileError {
    #[error("not a tensor file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("file truncated: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("tensor {name:?}: {reason}")]
    BadEntry { name: String, reason: String },
    #[error("tensor {name:?} is stored as {found:?}, requested {requested:?}")]
    DTypeMismatch { name: String, found: DType, requested: DType },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory image of a tensor file.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub metadata: serde_json::Value,
    entries: Vec<TensorEntry>,
    payload: Vec<u8>,
}

impl TensorFile {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self { metadata, entries: Vec::new(), payload: Vec::new() }
    }

    pub fn push<T: Scalar>(&mut self, name: impl Into<String>, tensor: &Tensor<T>) -> Result<(), TensorFileError> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(TensorFileError::DuplicateName(name));
        }
        let offset = self.payload.len();
        for &v in tensor.data() {
            v.write_le(&mut self.payload);
        }
        self.entries.push(TensorEntry {
            name,
            dtype: T::DTYPE,
            shape: tensor.shape().to_vec(),
            offset,
            length: self.payload.len() - offset,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Option<Result<Tensor<T>, TensorFileError>> {
        let entry = self.entries.iter().find(|e| e.name == name)?;
        Some(self.decode(entry))
    }

    pub fn decode<T: Scalar>(&self, entry: &TensorEntry) -> Result<Tensor<T>, TensorFileError> {
        if entry.dtype != T::DTYPE {
            return Err(TensorFileError::DTypeMismatch {
                name: entry.name.clone(),
                found: entry.dtype,
                requested: T::DTYPE,
            });
        }
        let width = entry.dtype.size_of();
        let bytes = &self.payload[entry.offset..entry.offset + entry.length];
        let data = bytes.chunks_exact(width).map(T::read_le).collect();
        Tensor::new(entry.shape.clone(), data)
            .map_err(|e| TensorFileError::BadEntry { name: entry.name.clone(), reason: e.to_string() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header { metadata: self.metadata.clone(), tensors: self.entries.clone() })
            .expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorFileError> {
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(TensorFileError::Truncated { needed, available: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(8)?;
        if &bytes[..8] != MAGIC {
            return Err(TensorFileError::BadMagic);
        }
        need(20)?;
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(TensorFileError::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let payload_start = 20usize.saturating_add(header_len);
        need(payload_start)?;
        let header: Header = serde_json::from_slice(&bytes[20..payload_start])?;
        let payload = bytes[payload_start..].to_vec();

        let mut seen = std::collections::HashSet::new();
        for e in &header.tensors {
            if !seen.insert(e.name.as_str()) {
                return Err(TensorFileError::DuplicateName(e.name.clone()));
            }
            let expected = e.shape.iter().product::<usize>() * e.dtype.size_of();
            if e.length != expected {
                return Err(TensorFileError::BadEntry {
                    name: e.name.clone(),
                    reason: format!("length {} does not match shape {:?}", e.length, e.shape),
                });
            }
            need(payload_start + e.offset + e.length)?;
        }
        Ok(Self { metadata: header.metadata, entries: header.tensors, payload })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), TensorFileError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, TensorFileError> {
        let bytes = fs::read(path).map_err(|source| TensorFileError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TensorFileError> {
    let io = |source| TensorFileError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(bytes).map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

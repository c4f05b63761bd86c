use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, LossMode, OptimizerState};
use crate::numerics::{DType, Scalar, Tensor};
use crate::tensorfile::{TensorFile, TensorFileError};
use crate::vit::{parameter_shapes, ModelConfig, ModelParameters};

/// Version of the checkpoint metadata layout, independent of the container version.
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND: &str = "checkpoint";
const PARAM_PREFIX: &str = "param.";
const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    File(#[from] TensorFileError),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("file is a {found:?}, not a checkpoint")]
    WrongKind { found: String },
    #[error("malformed checkpoint metadata: {0}")]
    Metadata(String),
    #[error("unknown tensor {0:?} in checkpoint")]
    UnknownTensor(String),
    #[error("checkpoint lacks tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {found:?}, config requires {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("class count mismatch: expected {expected} classes, checkpoint has {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("class order mismatch: expected [{}], checkpoint has [{}]", expected.join(", "), found.join(", "))]
    ClassOrder { expected: Vec<String>, found: Vec<String> },
}

/// Provenance recorded alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub best_accuracy: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub eval_batch_size: usize,
    pub loss_mode: LossMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Scalar = f32> {
    pub config: ModelConfig,
    pub class_names: Vec<String>,
    pub params: ModelParameters<T>,
    pub optimizer: Option<OptimizerState<T>>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    t: u64,
    config: AdamConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    checkpoint_version: u32,
    config: ModelConfig,
    class_names: Vec<String>,
    training: TrainingMeta,
    optimizer: Option<OptimizerMeta>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Fails unless the checkpoint's classes are exactly `expected`, in order.
    pub fn expect_classes(&self, expected: &[String]) -> Result<(), CheckpointError> {
        if expected.len() != self.class_names.len() {
            return Err(CheckpointError::ClassCount { expected: expected.len(), found: self.class_names.len() });
        }
        if expected != self.class_names {
            return Err(CheckpointError::ClassOrder { expected: expected.to_vec(), found: self.class_names.clone() });
        }
        Ok(())
    }

    pub fn to_file(&self) -> Result<TensorFile, CheckpointError> {
        let header = Header {
            kind: KIND.into(),
            checkpoint_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            class_names: self.class_names.clone(),
            training: self.meta.clone(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerMeta { t: o.t, config: o.config }),
        };
        let metadata = serde_json::to_value(header).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let mut file = TensorFile::new(metadata);
        for (name, t) in self.params.named() {
            file.push(format!("{PARAM_PREFIX}{name}"), t)?;
        }
        if let Some(opt) = &self.optimizer {
            for (prefix, moments) in [(M_PREFIX, &opt.m), (V_PREFIX, &opt.v)] {
                for (name, t) in moments.named() {
                    file.push(format!("{prefix}{name}"), t)?;
                }
            }
        }
        Ok(file)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        Ok(self.to_file()?.to_bytes())
    }

    /// Rebuilds a checkpoint, converting stored tensors to `T` when the
    /// stored precision differs.
    pub fn from_file(file: &TensorFile) -> Result<Self, CheckpointError> {
        let kind = file.metadata.get("kind").and_then(|k| k.as_str()).unwrap_or_default();
        if kind != KIND {
            return Err(CheckpointError::WrongKind { found: kind.to_owned() });
        }
        let version = file.metadata.get("checkpoint_version").and_then(|v| v.as_u64());
        match version {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(CheckpointError::VersionMismatch { expected: CHECKPOINT_VERSION, found: v as u32 });
            }
            None => return Err(CheckpointError::Metadata("missing checkpoint_version".into())),
        }
        let header: Header =
            serde_json::from_value(file.metadata.clone()).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        header.config.validate().map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        if header.class_names.len() != header.config.num_classes {
            return Err(CheckpointError::ClassCount {
                expected: header.config.num_classes,
                found: header.class_names.len(),
            });
        }

        let mut tensors = BTreeMap::new();
        for entry in file.entries() {
            let known = [PARAM_PREFIX, M_PREFIX, V_PREFIX]
                .iter()
                .any(|p| entry.name.starts_with(p) && (header.optimizer.is_some() || *p == PARAM_PREFIX));
            if !known {
                return Err(CheckpointError::UnknownTensor(entry.name.clone()));
            }
            let tensor: Tensor<T> = match entry.dtype {
                DType::F32 => file.decode::<f32>(entry)?.cast(),
                DType::F64 => file.decode::<f64>(entry)?.cast(),
            };
            tensors.insert(entry.name.clone(), tensor);
        }
        let shapes = parameter_shapes(&header.config);
        let mut take = |prefix: &str| {
            shapes.try_map(|name, shape| {
                let key = format!("{prefix}{name}");
                let t = tensors.remove(&key).ok_or_else(|| CheckpointError::MissingTensor(key.clone()))?;
                if t.shape() != shape.as_slice() {
                    return Err(CheckpointError::ShapeMismatch {
                        name: key,
                        expected: shape.clone(),
                        found: t.shape().to_vec(),
                    });
                }
                Ok(t)
            })
        };
        let params = take(PARAM_PREFIX)?;
        let optimizer = match &header.optimizer {
            Some(o) => Some(OptimizerState { m: take(M_PREFIX)?, v: take(V_PREFIX)?, t: o.t, config: o.config }),
            None => None,
        };
        if let Some(name) = tensors.keys().next() {
            return Err(CheckpointError::UnknownTensor(name.clone()));
        }
        Ok(Self { config: header.config, class_names: header.class_names, params, optimizer, meta: header.training })
    }
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_checkpoint<T: Scalar>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<(), CheckpointError> {
    Ok(checkpoint.to_file()?.save(path)?)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    Checkpoint::from_file(&TensorFile::load(path)?)
}

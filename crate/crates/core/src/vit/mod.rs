//! Vision Transformer classifier: patch embedding, pre-norm encoder stack,
//! and a softmax head over the class token.

mod config;
mod model;
mod params;

pub use config::{AttentionScale, ModelConfig, NormPlacement};
pub use model::{attention, embed, encoder_layer, forward, forward_graph, patchify, register, ForwardOutput, ForwardVars};
pub use params::{
    init_parameters, is_head_parameter, parameter_shapes, LayerWeights, ModelParameters, VitWeights, INIT_STD,
};

use crate::numerics::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum VitError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

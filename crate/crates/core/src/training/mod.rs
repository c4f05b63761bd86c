//! Cross-entropy objective, Adam, early stopping, checkpoints, and the
//! epoch loop that ties them to the classifier.

mod adam;
mod checkpoint;
mod early_stop;
mod loss;
mod trainer;

pub use adam::{adam_step, adam_update, clip_grad_norm, AdamConfig, OptimizerState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TrainingMeta, CHECKPOINT_VERSION,
};
pub use early_stop::{run_training, EarlyStopState, EpochRecord, EpochRunner, Observation, TrainSummary};
pub use loss::{cross_entropy, loss_graph, LossMode, PROBABILITY_FLOOR};
pub use trainer::{
    evaluate_accuracy, history_csv, predict_probabilities, train, train_step, write_history_csv, TrainConfig,
    TrainOutcome,
};

use crate::dataset::DatasetError;
use crate::numerics::TensorError;
use crate::vit::VitError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Vit(#[from] VitError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("gradient of {name} contains NaN or infinite values")]
    NonFiniteGradient { name: String },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Step { epoch: usize, batch: usize, source: Box<TrainingError> },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

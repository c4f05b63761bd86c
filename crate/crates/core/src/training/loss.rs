use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::numerics::{Graph, Scalar, Tensor, TensorError, Var};
use crate::vit::ForwardVars;

/// Lower clamp applied to probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// How the training loss is formed from the classifier output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `log_softmax` of the logits, then negative log-likelihood.
    #[default]
    Fused,
    /// `softmax`, clamp at [`PROBABILITY_FLOOR`], `ln`, negative log-likelihood.
    Literal,
}

/// Mean negative log of the true-class probability over a `B×C` batch.
pub fn cross_entropy<T: Scalar>(probabilities: &Tensor<T>, labels: &[usize]) -> Result<T, TrainingError> {
    let [rows, classes] = probabilities.shape()[..] else {
        return Err(TensorError::InvalidArgument {
            op: "cross_entropy",
            reason: format!("expected B×C probabilities, got {:?}", probabilities.shape()),
        }
        .into());
    };
    if rows != labels.len() {
        return Err(TrainingError::InvalidArgument(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(TrainingError::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
    }
    let floor = T::from_f64_lossy(PROBABILITY_FLOOR);
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probabilities.data()[i * classes + y].max(floor).ln())
        .sum();
    Ok(total / T::from_usize(rows).expect("row count fits"))
}

/// Records the loss of a forward pass on `g`.
pub fn loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    vars: &ForwardVars,
    labels: &[usize],
    mode: LossMode,
) -> Result<Var, TensorError> {
    let logp = match mode {
        LossMode::Fused => g.log_softmax(vars.logits)?,
        LossMode::Literal => g.clamped_log(vars.probabilities, T::from_f64_lossy(PROBABILITY_FLOOR))?,
    };
    g.nll(logp, labels)
}

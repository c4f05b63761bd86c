use serde::{Deserialize, Serialize};

use super::TrainingError;

/// Best accuracy so far and epochs since it last improved.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopState {
    pub best_accuracy: f64,
    pub best_epoch: Option<usize>,
    pub stale: usize,
    pub patience: usize,
}

/// Outcome of feeding one epoch's accuracy to [`EarlyStopState::observe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        Self { best_accuracy: 0.0, best_epoch: None, stale: 0, patience }
    }

    /// Only a strictly higher accuracy counts as an improvement.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> Observation {
        let improved = accuracy > self.best_accuracy;
        if improved {
            self.best_accuracy = accuracy;
            self.best_epoch = Some(epoch);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation { improved, stop: self.stale >= self.patience }
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_accuracy: f64,
    pub is_best: bool,
}

/// The three things an epoch loop needs from a model.
pub trait EpochRunner {
    /// Trains for one epoch and returns the mean training loss.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64, TrainingError>;

    fn evaluate(&mut self, epoch: usize) -> Result<f64, TrainingError>;

    /// Persists the current model as the best one.
    fn save_best(&mut self, epoch: usize, accuracy: f64) -> Result<(), TrainingError>;

    /// Called after every epoch with its history row.
    fn on_epoch_end(&mut self, _record: &EpochRecord) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_accuracy: f64,
    pub stopped_early: bool,
}

/// Runs epochs `1..=epochs`, saving whenever evaluation accuracy strictly
/// improves, and stops once `patience` consecutive epochs fail to improve.
pub fn run_training<R: EpochRunner + ?Sized>(
    runner: &mut R,
    epochs: usize,
    patience: usize,
) -> Result<TrainSummary, TrainingError> {
    if epochs == 0 || patience == 0 {
        return Err(TrainingError::InvalidArgument(format!(
            "epochs ({epochs}) and patience ({patience}) must both be at least 1"
        )));
    }
    let mut state = EarlyStopState::new(patience);
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=epochs {
        let train_loss = runner.train_epoch(epoch)?;
        let accuracy = runner.evaluate(epoch)?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(TrainingError::InvalidArgument(format!("epoch {epoch}: accuracy {accuracy} outside [0, 1]")));
        }
        let obs = state.observe(epoch, accuracy);
        if obs.improved {
            runner.save_best(epoch, accuracy)?;
        }
        let record = EpochRecord { epoch, train_loss, eval_accuracy: accuracy, is_best: obs.improved };
        runner.on_epoch_end(&record);
        history.push(record);
        if obs.stop {
            stopped_early = epoch < epochs;
            break;
        }
    }
    Ok(TrainSummary { history, best_epoch: state.best_epoch, best_accuracy: state.best_accuracy, stopped_early })
}

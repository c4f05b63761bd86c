use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    adam_step, clip_grad_norm, loss_graph, run_training, save_checkpoint, AdamConfig, Checkpoint, EpochRecord,
    EpochRunner, LossMode, OptimizerState, TrainSummary, TrainingError, TrainingMeta,
};
use crate::dataset::{batches, epoch_seed, SampleSource, DEFAULT_BATCH_SIZE};
use crate::numerics::{Graph, Scalar, Tensor};
use crate::vit::{forward, forward_graph, is_head_parameter, ModelConfig, ModelParameters};

/// Optimization settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub loss_mode: LossMode,
    /// Train only the classification head.
    pub head_only: bool,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub eval_batch_size: usize,
    /// Store Adam moments in saved checkpoints.
    pub save_optimizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: DEFAULT_BATCH_SIZE,
            patience: 15,
            adam: AdamConfig::default(),
            init_seed: 0,
            shuffle_seed: 0,
            loss_mode: LossMode::Fused,
            head_only: false,
            clip_norm: None,
            eval_batch_size: DEFAULT_BATCH_SIZE,
            save_optimizer: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(TrainingError::InvalidArgument(
                "epochs, patience, batch_size and eval_batch_size must all be at least 1".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(TrainingError::InvalidArgument(format!("clip_norm must be positive, got {c}")));
            }
        }
        self.adam.validate()
    }
}

/// Forward, loss, backward and one Adam step on a single batch. Returns the
/// batch loss before the update.
pub fn train_step<T: Scalar>(
    params: &mut ModelParameters<T>,
    state: &mut OptimizerState<T>,
    images: &Tensor<T>,
    labels: &[usize],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<T, TrainingError> {
    let mut g = Graph::new();
    let w = params.try_map(|name, t| {
        if config.head_only && !is_head_parameter(name) {
            g.input(t.clone())
        } else {
            g.param(t.clone())
        }
    })?;
    let x = g.input(images.clone())?;
    let vars = forward_graph(&mut g, x, &w, model, false)?;
    let loss = loss_graph(&mut g, &vars, labels, config.loss_mode)?;
    let value = g.value(loss).item()?;
    let mut store = g.backward(loss)?;
    let mut grads = w.map(|_, &var| store.take(var).unwrap_or_else(|| Tensor::zeros(g.value(var).shape().to_vec())));
    drop(g);
    if let Some(limit) = config.clip_norm {
        clip_grad_norm(&mut grads, limit);
    }
    adam_step(params, &grads, state)?;
    Ok(value)
}

/// Class probabilities `N×C` for every sample of `source`, in source order.
pub fn predict_probabilities<T: Scalar, S: SampleSource + ?Sized>(
    params: &ModelParameters<T>,
    model: &ModelConfig,
    source: &S,
    batch_size: usize,
) -> Result<Tensor<T>, TrainingError> {
    let mut data = Vec::with_capacity(source.len() * model.num_classes);
    for batch in batches(source, batch_size, false, 0)? {
        let batch = batch?;
        let out = forward(params, &batch.images.cast::<T>(), model, false)?;
        data.extend_from_slice(out.probabilities.data());
    }
    Ok(Tensor::new(vec![source.len(), model.num_classes], data)?)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate_accuracy<T: Scalar, S: SampleSource + ?Sized>(
    params: &ModelParameters<T>,
    model: &ModelConfig,
    source: &S,
    batch_size: usize,
) -> Result<f64, TrainingError> {
    let probs = predict_probabilities(params, model, source, batch_size)?;
    let predictions = probs.argmax_rows()?;
    let correct = predictions.iter().zip(source.labels()).filter(|(p, y)| **p == *y).count();
    Ok(correct as f64 / source.len() as f64)
}

/// `epoch,train_loss,eval_accuracy,is_best` with one row per epoch.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,eval_accuracy,is_best\n");
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.eval_accuracy, r.is_best).expect("string write");
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<(), TrainingError> {
    std::fs::write(path, history_csv(history))
        .map_err(|source| TrainingError::Io { path: path.display().to_string(), source })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar = f32> {
    pub summary: TrainSummary,
    /// The best-accuracy checkpoint; `None` if no epoch beat accuracy 0.
    pub best: Option<Checkpoint<T>>,
    pub final_params: ModelParameters<T>,
}

struct VitRunner<'a, T: Scalar, A: ?Sized, B: ?Sized> {
    model: &'a ModelConfig,
    config: &'a TrainConfig,
    class_names: &'a [String],
    train_set: &'a A,
    eval_set: &'a B,
    params: ModelParameters<T>,
    state: OptimizerState<T>,
    checkpoint_path: Option<PathBuf>,
    best: Option<Checkpoint<T>>,
    on_epoch: &'a mut dyn FnMut(&EpochRecord),
}

impl<T: Scalar, A: SampleSource + ?Sized, B: SampleSource + ?Sized> EpochRunner for VitRunner<'_, T, A, B> {
    fn train_epoch(&mut self, epoch: usize) -> Result<f64, TrainingError> {
        let seed = epoch_seed(self.config.shuffle_seed, epoch);
        let mut weighted = 0.0;
        for (index, batch) in batches(self.train_set, self.config.batch_size, true, seed)?.enumerate() {
            let batch = batch?;
            let images = batch.images.cast::<T>();
            let loss = train_step(&mut self.params, &mut self.state, &images, &batch.labels, self.model, self.config)
                .map_err(|e| TrainingError::Step { epoch, batch: index + 1, source: Box::new(e) })?;
            weighted += loss.as_f64() * batch.labels.len() as f64;
        }
        Ok(weighted / self.train_set.len() as f64)
    }

    fn evaluate(&mut self, _epoch: usize) -> Result<f64, TrainingError> {
        evaluate_accuracy(&self.params, self.model, self.eval_set, self.config.eval_batch_size)
    }

    fn save_best(&mut self, epoch: usize, accuracy: f64) -> Result<(), TrainingError> {
        let checkpoint = Checkpoint {
            config: self.model.clone(),
            class_names: self.class_names.to_vec(),
            params: self.params.clone(),
            optimizer: self.config.save_optimizer.then(|| self.state.clone()),
            meta: TrainingMeta {
                epoch,
                best_accuracy: accuracy,
                init_seed: self.config.init_seed,
                shuffle_seed: self.config.shuffle_seed,
                eval_batch_size: self.config.eval_batch_size,
                loss_mode: self.config.loss_mode,
            },
        };
        if let Some(path) = &self.checkpoint_path {
            save_checkpoint(path, &checkpoint)?;
        }
        self.best = Some(checkpoint);
        Ok(())
    }

    fn on_epoch_end(&mut self, record: &EpochRecord) {
        (self.on_epoch)(record);
    }
}

/// Trains `initial` on `train_set`, monitoring accuracy on `eval_set`. The best
/// checkpoint is written to `checkpoint_path` (when given) each time it improves.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Scalar, A: SampleSource + ?Sized, B: SampleSource + ?Sized>(
    model: &ModelConfig,
    class_names: &[String],
    initial: ModelParameters<T>,
    train_set: &A,
    eval_set: &B,
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>, TrainingError> {
    model.validate()?;
    config.validate()?;
    if class_names.len() != model.num_classes {
        return Err(TrainingError::InvalidArgument(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            model.num_classes
        )));
    }
    for (what, size) in [("training", train_set.image_size()), ("evaluation", eval_set.image_size())] {
        if size != model.image_size {
            return Err(TrainingError::InvalidArgument(format!(
                "{what} images are {size}×{size} but the model expects {s}×{s}",
                s = model.image_size
            )));
        }
    }
    let state = OptimizerState::new(&initial, config.adam);
    let mut runner = VitRunner {
        model,
        config,
        class_names,
        train_set,
        eval_set,
        params: initial,
        state,
        checkpoint_path: checkpoint_path.map(Path::to_path_buf),
        best: None,
        on_epoch,
    };
    let summary = run_training(&mut runner, config.epochs, config.patience)?;
    Ok(TrainOutcome { summary, best: runner.best, final_params: runner.params })
}

//! Batch command-line interface: `preprocess`, `train`, `evaluate`,
//! `predict` and `plot`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_plot, cmd_predict, cmd_preprocess, cmd_train, load_split, LoadedSplit};
pub use config::{DataConfig, Device, FileConfig, Overrides, RunConfig, DEFAULT_OUT_DIR, RESOLVED_CONFIG_FILE};

use crate::dataset::DatasetError;
use crate::metrics::MetricsError;
use crate::numerics::TensorError;
use crate::pseudocolor::PreprocessError;
use crate::training::{CheckpointError, TrainingError};
use crate::vit::VitError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Vit(#[from] VitError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("{0}")]
    Failed(String),
}

#[derive(Parser, Debug)]
#[command(name = "pcvit", version, about = "Pseudo-color Vision Transformer pipeline for grayscale image classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Colormap every image of a class-folder corpus into tensor archives.
    Preprocess(RunArgs),
    /// Train a classifier and keep the best checkpoint.
    Train(RunArgs),
    /// Score a checkpoint on a split and write report files.
    Evaluate(EvaluateArgs),
    /// Classify individual images.
    Predict(PredictArgs),
    /// Render ROC and confusion-matrix SVGs from a report directory.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus root with train/ and test/ class folders, or a preprocessed output directory.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "PCVIT_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["base", "tiny"])]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Hold out this fraction of the training split for early stopping.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Train only the classification head.
    #[arg(long)]
    pub head_only: bool,
    #[arg(long, value_enum)]
    pub device: Option<Device>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let overrides = Overrides {
            data_root: self.data_root.clone(),
            out: self.out.clone(),
            seed: self.seed,
            variant: self.variant.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            val_fraction: self.val_fraction,
            head_only: self.head_only,
            device: self.device,
        };
        RunConfig::resolve(file, &overrides)
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus root or preprocessed output directory.
    #[arg(long)]
    pub data_root: PathBuf,
    /// Report directory.
    #[arg(long, env = "PCVIT_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// Directory holding report.json.
    #[arg(long)]
    pub report_dir: PathBuf,
    /// Where to write the SVGs; defaults to the report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(&args.resolve()?),
        Command::Train(args) => cmd_train(&args.resolve()?),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Plot(args) => cmd_plot(&args),
    }
}

/// Binary entry point: parses arguments, runs the command, and maps the
/// outcome to an exit code. Diagnostics go to stderr.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

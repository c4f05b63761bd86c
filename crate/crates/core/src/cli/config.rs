use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::dataset::{ClassSpec, BRISC_CLASSES};
use crate::training::{LossMode, TrainConfig};
use crate::vit::{AttentionScale, ModelConfig, NormPlacement};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const DEFAULT_OUT_DIR: &str = "pcvit-out";

/// Device selection. Execution is always single-device CPU; the value is
/// recorded in the resolved config and has no other effect.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    #[default]
    Auto,
    Cpu,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub device: Option<Device>,
    pub out_dir: Option<PathBuf>,
    pub data: FileData,
    pub model: FileModel,
    pub training: FileTraining,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileData {
    pub root: Option<PathBuf>,
    pub classes: Option<Vec<String>>,
    pub discover_classes: Option<bool>,
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileModel {
    pub variant: Option<String>,
    pub image_size: Option<usize>,
    pub patch_size: Option<usize>,
    pub embed_dim: Option<usize>,
    pub depth: Option<usize>,
    pub heads: Option<usize>,
    pub ffn_hidden: Option<usize>,
    pub num_classes: Option<usize>,
    pub norm: Option<NormPlacement>,
    pub attention_scale: Option<AttentionScale>,
    pub cls_positional: Option<bool>,
    pub layer_norm_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileTraining {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub loss_mode: Option<LossMode>,
    pub head_only: Option<bool>,
    pub clip_norm: Option<f64>,
    pub eval_batch_size: Option<usize>,
    pub save_optimizer: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line; they win over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub val_fraction: Option<f64>,
    pub head_only: bool,
    pub device: Option<Device>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    /// Expected class folders in label order; empty means discover them.
    pub classes: Vec<String>,
    pub val_fraction: f64,
}

impl DataConfig {
    pub fn class_spec(&self) -> ClassSpec {
        if self.classes.is_empty() {
            ClassSpec::Discover
        } else {
            ClassSpec::Expected(self.classes.clone())
        }
    }
}

/// Every effective setting of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub device: Device,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

macro_rules! apply {
    ($target:expr, $source:expr, [$($field:ident),*]) => {
        $(if let Some(v) = $source.$field.clone() { $target.$field = v; })*
    };
}

impl RunConfig {
    /// Command line, then file, then built-in defaults.
    pub fn resolve(file: FileConfig, cli: &Overrides) -> Result<Self, CliError> {
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        if seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed {seed} exceeds {}", i64::MAX)));
        }
        let variant = cli.variant.clone().or(file.model.variant.clone()).unwrap_or_else(|| "base".into());
        let mut model = ModelConfig::variant(&variant)
            .ok_or_else(|| CliError::Config(format!("unknown variant {variant:?} (expected base or tiny)")))?;
        apply!(model, file.model, [
            image_size, patch_size, embed_dim, depth, heads, ffn_hidden, num_classes, norm, attention_scale,
            cls_positional, layer_norm_eps
        ]);

        let discover = file.data.discover_classes.unwrap_or(false);
        let classes = match (file.data.classes, discover) {
            (Some(_), true) => return Err(CliError::Config("data.classes and data.discover_classes are exclusive".into())),
            (Some(c), false) => c,
            (None, true) => Vec::new(),
            (None, false) => BRISC_CLASSES.iter().map(|s| s.to_string()).collect(),
        };
        if !classes.is_empty() {
            if file.model.num_classes.is_some_and(|n| n != classes.len()) {
                return Err(CliError::Config(format!(
                    "model.num_classes = {} but {} classes are listed",
                    model.num_classes,
                    classes.len()
                )));
            }
            model.num_classes = classes.len();
        }
        model.validate()?;

        let mut training = TrainConfig { init_seed: seed, shuffle_seed: seed, ..TrainConfig::default() };
        let t = &file.training;
        apply!(training, t, [epochs, batch_size, patience, loss_mode, head_only, eval_batch_size, save_optimizer]);
        training.clip_norm = t.clip_norm.or(training.clip_norm);
        training.adam.lr = cli.lr.or(t.lr).unwrap_or(training.adam.lr);
        apply!(training.adam, t, [beta1, beta2, eps]);
        apply!(training, cli, [epochs, batch_size, patience]);
        training.head_only |= cli.head_only;
        training.validate()?;

        let val_fraction = cli.val_fraction.or(file.data.val_fraction).unwrap_or(0.0);
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(CliError::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
        }
        Ok(Self {
            seed,
            device: cli.device.or(file.device).unwrap_or_default(),
            out_dir: cli.out.clone().or(file.out_dir).unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            data: DataConfig { root: cli.data_root.clone().or(file.data.root), classes, val_fraction },
            model,
            training,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Writes `out_dir/resolved_config.toml`.
    pub fn write_resolved(&self) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|source| CliError::Io { path: self.out_dir.display().to_string(), source })?;
        let path = self.out_dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Ok(path)
    }

    pub fn data_root(&self) -> Result<&Path, CliError> {
        self.data.root.as_deref().ok_or_else(|| CliError::Config("no data root (use --data-root or data.root)".into()))
    }
}

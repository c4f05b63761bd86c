use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{CliError, EvaluateArgs, PlotArgs, PredictArgs, RunConfig};
use crate::dataset::{
    read_archive, scan_corpus, write_archive, ClassSpec, DatasetManifest, ImageFolder, InMemory, SampleSource, Split,
    ARCHIVE_FILE, MANIFEST_FILE,
};
use crate::metrics::{full_report, read_report, write_plots, write_report, CONFUSION_SVG, ROC_SVG};
use crate::numerics::Tensor;
use crate::pseudocolor::{GrayscaleImage, Preprocessor};
use crate::training::{
    load_checkpoint, predict_probabilities, train, write_history_csv, Checkpoint,
};
use crate::vit::{forward, init_parameters};

pub const CHECKPOINT_FILE: &str = "best.pcvt";
pub const HISTORY_FILE: &str = "history.csv";

/// One split held in memory, from either a preprocessed archive or a raw corpus.
pub struct LoadedSplit {
    pub samples: InMemory,
    pub class_names: Vec<String>,
    pub manifest: Option<DatasetManifest>,
}

/// Reads `root/<split>/archive.pcvt` when present, otherwise scans and
/// preprocesses the class folders under `root/<split>`.
pub fn load_split(root: &Path, split: Split, classes: &ClassSpec, image_size: usize) -> Result<LoadedSplit, CliError> {
    let dir = root.join(split.dir_name());
    let archive = dir.join(ARCHIVE_FILE);
    if archive.is_file() {
        let (samples, class_names) = read_archive(&archive)?;
        if let ClassSpec::Expected(expected) = classes {
            if *expected != class_names {
                return Err(CliError::Failed(format!(
                    "{} holds classes [{}] but [{}] were expected",
                    archive.display(),
                    class_names.join(", "),
                    expected.join(", ")
                )));
            }
        }
        if samples.image_size() != image_size {
            return Err(CliError::Failed(format!(
                "{} was preprocessed at {s}×{s}; the model expects {image_size}×{image_size}",
                archive.display(),
                s = samples.image_size()
            )));
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = manifest_path.is_file().then(|| DatasetManifest::load(&manifest_path)).transpose()?;
        log::info!("{split}: loaded {} preprocessed samples from {}", samples.len(), archive.display());
        return Ok(LoadedSplit { samples, class_names, manifest: manifest.map(|m| DatasetManifest { split, ..m }) });
    }
    let manifest = scan_corpus(root, split, classes)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    log::info!("{split}: preprocessing {} images from {}", manifest.len(), dir.display());
    let samples = ImageFolder::new(manifest.clone(), Preprocessor::jet(image_size)?).materialize()?;
    Ok(LoadedSplit { class_names: manifest.class_names.clone(), samples, manifest: Some(manifest) })
}

/// Splits off a held-out subset by manifest entry, keeping archive order.
fn carve(split: &LoadedSplit, fraction: f64, seed: u64) -> Result<(InMemory, InMemory), CliError> {
    let manifest = split
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Failed(format!("--val-fraction needs a {MANIFEST_FILE} beside the training archive")))?;
    let (train_part, val_part) = manifest.carve_validation(fraction, seed)?;
    let index: BTreeMap<String, usize> =
        (0..split.samples.len()).map(|i| (split.samples.source_path(i), i)).collect();
    let pick = |m: &DatasetManifest| -> Result<InMemory, CliError> {
        let indices = m
            .entries
            .iter()
            .map(|e| {
                let key = e.path.display().to_string();
                index.get(&key).copied().ok_or_else(|| CliError::Failed(format!("{key} is in the manifest but not the archive")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(split.samples.select(&indices)?)
    };
    Ok((pick(&train_part)?, pick(&val_part)?))
}

fn class_summary(names: &[String], samples: &InMemory) -> String {
    let mut counts = vec![0usize; names.len()];
    for y in samples.labels() {
        counts[y] += 1;
    }
    names.iter().zip(counts).map(|(n, c)| format!("{n} {c}")).collect::<Vec<_>>().join(", ")
}

fn checkpoint_error(path: &Path) -> impl FnOnce(crate::training::CheckpointError) -> CliError + '_ {
    move |source| CliError::Checkpoint { path: path.display().to_string(), source }
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let root = cfg.data_root()?;
    cfg.write_resolved()?;
    let spec = cfg.data.class_spec();
    for split in [Split::Train, Split::Test] {
        if split == Split::Test && !root.join(split.dir_name()).is_dir() {
            log::warn!("{} has no {} split; skipping it", root.display(), split.dir_name());
            continue;
        }
        let manifest = scan_corpus(root, split, &spec)?;
        for w in &manifest.warnings {
            log::warn!("{w}");
        }
        let samples = ImageFolder::new(manifest.clone(), Preprocessor::jet(cfg.model.image_size)?).materialize()?;
        let out = cfg.out_dir.join(split.dir_name());
        let path = write_archive(&out, &manifest, &samples)?;
        println!("{split}: {} images ({}) -> {}", samples.len(), class_summary(&manifest.class_names, &samples), path.display());
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let root = cfg.data_root()?;
    let mut cfg = cfg.clone();
    let spec = cfg.data.class_spec();
    let train_split = load_split(root, Split::Train, &spec, cfg.model.image_size)?;
    let class_names = train_split.class_names.clone();
    if cfg.data.classes.is_empty() {
        cfg.data.classes = class_names.clone();
        cfg.model.num_classes = class_names.len();
        cfg.model.validate()?;
    }
    let (train_set, eval_set, eval_name) = if cfg.data.val_fraction > 0.0 {
        let (t, v) = carve(&train_split, cfg.data.val_fraction, cfg.seed)?;
        (t, v, "validation")
    } else {
        let test = load_split(root, Split::Test, &ClassSpec::Expected(class_names.clone()), cfg.model.image_size)?;
        (train_split.samples, test.samples, "test")
    };
    let resolved = cfg.write_resolved()?;
    log::info!("resolved config written to {}", resolved.display());
    log::info!(
        "training {} on {} samples, monitoring {} {eval_name} samples (device {:?}: cpu)",
        cfg.model.variant,
        train_set.len(),
        eval_set.len(),
        cfg.device
    );

    let checkpoint_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let params = init_parameters::<f32>(&cfg.model, cfg.training.init_seed);
    let outcome = train(
        &cfg.model,
        &class_names,
        params,
        &train_set,
        &eval_set,
        &cfg.training,
        Some(&checkpoint_path),
        &mut |r| {
            log::info!(
                "epoch {:>3}  loss {:.6}  {eval_name} accuracy {:.4}{}",
                r.epoch,
                r.train_loss,
                r.eval_accuracy,
                if r.is_best { "  (best)" } else { "" }
            )
        },
    )?;
    let history_path = cfg.out_dir.join(HISTORY_FILE);
    write_history_csv(&history_path, &outcome.summary.history)?;
    let summary = &outcome.summary;
    let Some(best_epoch) = summary.best_epoch else {
        return Err(CliError::Failed(format!(
            "no epoch exceeded accuracy 0; no checkpoint written (history in {})",
            history_path.display()
        )));
    };
    println!(
        "best epoch {best_epoch} of {} with {eval_name} accuracy {}{}; checkpoint {}; history {}",
        summary.history.len(),
        summary.best_accuracy,
        if summary.stopped_early { " (stopped early)" } else { "" },
        checkpoint_path.display(),
        history_path.display()
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let checkpoint: Checkpoint<f32> = load_checkpoint(&args.checkpoint).map_err(checkpoint_error(&args.checkpoint))?;
    let split: Split = args.split.parse()?;
    let data = load_split(&args.data_root, split, &ClassSpec::Discover, checkpoint.config.image_size)?;
    checkpoint.expect_classes(&data.class_names).map_err(checkpoint_error(&args.checkpoint))?;
    let probs = predict_probabilities(
        &checkpoint.params,
        &checkpoint.config,
        &data.samples,
        checkpoint.meta.eval_batch_size,
    )?;
    let report = full_report(&probs.cast::<f64>(), &data.samples.labels(), &checkpoint.class_names)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(super::DEFAULT_OUT_DIR));
    write_report(&out, &report)?;
    if !args.no_plots {
        write_plots(&out, &report)?;
    }
    let auc = report.macro_auc.map(|a| a.to_string()).unwrap_or_else(|| "undefined".into());
    println!(
        "n {}  accuracy {}  macro precision {}  macro recall {}  macro f1 {}  macro auc {auc}  -> {}",
        report.n,
        report.accuracy,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1,
        out.display()
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let checkpoint: Checkpoint<f32> = load_checkpoint(&args.checkpoint).map_err(checkpoint_error(&args.checkpoint))?;
    let preprocessor = Preprocessor::jet(checkpoint.config.image_size)?;
    let mut failures = 0;
    for path in &args.images {
        let result = (|| -> Result<Tensor<f32>, CliError> {
            let img = GrayscaleImage::open(path)?;
            let tensor = preprocessor.apply(&img)?.into_tensor();
            let size = checkpoint.config.image_size;
            let batch = tensor.reshape(vec![1, 3, size, size])?;
            Ok(forward(&checkpoint.params, &batch, &checkpoint.config, false)?.probabilities)
        })();
        match result {
            Ok(probs) => {
                let class = probs.argmax_rows()?[0];
                let values: Vec<String> = probs.data().iter().map(|p| p.to_string()).collect();
                println!("{}\t{}\t{}", path.display(), checkpoint.class_names[class], values.join("\t"));
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: {}: {e}", path.display());
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} of {} images could not be classified", args.images.len())));
    }
    Ok(())
}

pub fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let report = read_report(&args.report_dir)?;
    let out = args.out.clone().unwrap_or_else(|| args.report_dir.clone());
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.display().to_string(), source })?;
    write_plots(&out, &report)?;
    println!("{}\n{}", out.join(ROC_SVG).display(), out.join(CONFUSION_SVG).display());
    Ok(())
}

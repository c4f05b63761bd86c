//! End-to-end runs of the `pcvit` binary on a small synthetic corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcvit::metrics::read_report;
use pcvit::synthetic::{write_toy_corpus, TOY_CLASSES};
use pcvit::training::load_checkpoint;

const SMALL_CONFIG: &str = r#"
seed = 3
[data]
classes = ["bar", "large_disk", "no_shape", "small_disk"]
[model]
variant = "tiny"
image_size = 16
patch_size = 8
embed_dim = 16
depth = 1
heads = 2
ffn_hidden = 32
[training]
epochs = 3
batch_size = 8
patience = 2
lr = 1e-3
"#;

fn pcvit(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcvit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("PCVIT_OUT")
        .output()
        .expect("launch pcvit")
}

fn ok(args: &[&Path]) -> String {
    let out = pcvit(args);
    assert!(out.status.success(), "pcvit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_toy_corpus(&dir.path().join("corpus"), 6, 3, 24, 1).unwrap();
        std::fs::write(dir.path().join("small.toml"), SMALL_CONFIG).unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn preprocess(&self, out: &str) -> String {
        ok(&[p("preprocess"), p("--config"), &self.path("small.toml"), p("--data-root"), &self.path("corpus"), p("--out"), &self.path(out)])
    }

    fn train(&self, data: &str, out: &str) -> String {
        ok(&[p("train"), p("--config"), &self.path("small.toml"), p("--data-root"), &self.path(data), p("--out"), &self.path(out)])
    }

    fn evaluate(&self, checkpoint: &str, data: &str, out: &str) -> Output {
        pcvit(&[p("evaluate"), p("--checkpoint"), &self.path(checkpoint), p("--data-root"), &self.path(data), p("--out"), &self.path(out)])
    }
}

#[test]
fn pipeline_commands_agree_with_each_other() {
    let f = Fixture::new();
    let summary = f.preprocess("prep");
    assert!(summary.contains("train: 24 images"), "{summary}");
    assert!(summary.contains("test: 12 images"), "{summary}");
    f.preprocess("prep2");
    for split in ["train", "test"] {
        for file in ["archive.pcvt", "manifest.tsv"] {
            let rel = format!("{split}/{file}");
            assert_eq!(std::fs::read(f.path("prep").join(&rel)).unwrap(), std::fs::read(f.path("prep2").join(&rel)).unwrap(), "{rel}");
        }
    }

    f.train("prep", "run");
    let history = std::fs::read_to_string(f.path("run/history.csv")).unwrap();
    let rows = history.lines().count() - 1;
    assert!((1..=3).contains(&rows), "{history}");
    assert!(f.path("run/resolved_config.toml").is_file());

    // the report's accuracy is the monitored accuracy of the best epoch
    let out = f.evaluate("run/best.pcvt", "prep", "report");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = load_checkpoint::<f32>(&f.path("run/best.pcvt")).unwrap();
    let report = read_report(&f.path("report")).unwrap();
    assert_eq!(report.n, 12);
    assert!((report.accuracy - checkpoint.meta.best_accuracy).abs() < 1e-12);
    assert_eq!(report.per_class.iter().filter(|c| c.auc.is_some()).count(), 4);
    assert_eq!(report.class_names, TOY_CLASSES.map(String::from).to_vec());

    // raw corpus and archives give the same evaluation
    let raw = f.evaluate("run/best.pcvt", "corpus", "report_raw");
    assert!(raw.status.success());
    assert_eq!(
        std::fs::read(f.path("report/report.json")).unwrap(),
        std::fs::read(f.path("report_raw/report.json")).unwrap()
    );

    // plot re-renders the same SVGs from the report files
    ok(&[p("plot"), p("--report-dir"), &f.path("report"), p("--out"), &f.path("replot")]);
    for svg in ["roc.svg", "confusion.svg"] {
        assert_eq!(std::fs::read(f.path("report").join(svg)).unwrap(), std::fs::read(f.path("replot").join(svg)).unwrap());
    }

    // predict keeps going past a bad file and exits nonzero
    let good = f.path("corpus/test/bar/0000.png");
    let bad = f.path("not_an_image.png");
    std::fs::write(&bad, b"garbage").unwrap();
    let out = pcvit(&[p("predict"), p("--checkpoint"), &f.path("run/best.pcvt"), &bad, &good]);
    assert!(!out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().next().expect("prediction for the good file");
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields.len(), 6);
    assert!(TOY_CLASSES.contains(&fields[1]));
    let total: f64 = fields[2..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_an_image.png"));

    // a corpus whose classes differ from the checkpoint's is rejected
    std::fs::rename(f.path("corpus/test/small_disk"), f.path("corpus/test/tiny_disk")).unwrap();
    let out = f.evaluate("run/best.pcvt", "corpus", "report_bad");
    assert!(!out.status.success());
}

#[test]
fn missing_checkpoint_is_an_error() {
    let f = Fixture::new();
    let out = f.evaluate("nothing/best.pcvt", "corpus", "report");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("best.pcvt"));
}

#[test]
fn corrupt_image_names_the_file() {
    let f = Fixture::new();
    std::fs::write(f.path("corpus/train/bar/broken.png"), b"\x89PNG truncated").unwrap();
    let out = pcvit(&[p("preprocess"), p("--config"), &f.path("small.toml"), p("--data-root"), &f.path("corpus"), p("--out"), &f.path("prep")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.png"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_is_rejected() {
    let f = Fixture::new();
    std::fs::write(f.path("bad.toml"), "[training]\nepoch = 3\n").unwrap();
    let out = pcvit(&[p("train"), p("--config"), &f.path("bad.toml"), p("--data-root"), &f.path("corpus")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

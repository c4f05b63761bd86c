use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{auc, confusion, macro_prf, roc_ovr, ConfusionMatrix, MetricsError, RocCurve};
use crate::numerics::Tensor;

pub const REPORT_JSON: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const PER_CLASS_CSV: &str = "per_class.csv";
pub const ROC_CSV: &str = "roc_points.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassReport {
    pub name: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub class_names: Vec<String>,
    pub n: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub harmonic_f1: f64,
    /// Mean over classes with a defined AUC; `None` if there are none.
    pub macro_auc: Option<f64>,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocCurve>,
    pub warnings: Vec<String>,
}

/// Scores `N×C` (probabilities), labels `N`, one name per class.
pub fn full_report(scores: &Tensor<f64>, labels: &[usize], class_names: &[String]) -> Result<EvaluationReport, MetricsError> {
    let [n, c] = scores.shape()[..] else {
        return Err(MetricsError::InvalidScores(format!("expected N×C scores, got {:?}", scores.shape())));
    };
    if c != class_names.len() {
        return Err(MetricsError::LengthMismatch { what: "score columns and class names", left: c, right: class_names.len() });
    }
    if n != labels.len() {
        return Err(MetricsError::LengthMismatch { what: "scores and labels", left: n, right: labels.len() });
    }
    if let Some(bad) = scores.data().iter().find(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidScores(format!("non-finite score {bad}")));
    }
    let predictions = scores.argmax_rows().map_err(|e| MetricsError::InvalidScores(e.to_string()))?;
    let cm = confusion(labels, &predictions, c)?;
    let prf = macro_prf(&cm);
    let mut warnings: Vec<String> = prf.warnings.clone();
    let mut roc = Vec::new();
    let mut aucs = Vec::with_capacity(c);
    for class in 0..c {
        match roc_ovr(scores, labels, class) {
            Ok(curve) => {
                aucs.push(Some(auc(&curve)));
                roc.push(curve);
            }
            Err(e @ MetricsError::Undefined { .. }) => {
                warnings.push(format!("{e}; excluded from macro AUC"));
                aucs.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let supports = cm.supports();
    let per_class = (0..c)
        .map(|k| ClassReport {
            name: class_names[k].clone(),
            support: supports[k],
            precision: prf.precision[k],
            recall: prf.recall[k],
            f1: prf.f1[k],
            auc: aucs[k],
        })
        .collect();
    Ok(EvaluationReport {
        class_names: class_names.to_vec(),
        n,
        accuracy: cm.accuracy(),
        macro_precision: prf.macro_precision,
        macro_recall: prf.macro_recall,
        macro_f1: prf.macro_f1,
        harmonic_f1: prf.harmonic_f1,
        macro_auc,
        per_class,
        confusion: cm,
        roc,
        warnings,
    })
}

impl EvaluationReport {
    /// Checks internal consistency after deserialization.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let c = self.class_names.len();
        let bad = |field: &str, why: String| Err(MetricsError::Malformed(format!("field `{field}`: {why}")));
        if self.per_class.len() != c {
            return bad("per_class", format!("{} rows for {c} classes", self.per_class.len()));
        }
        if let Err(e) = ConfusionMatrix::from_counts(self.confusion.rows().to_vec()) {
            return bad("confusion", e.to_string());
        }
        if self.confusion.classes() != c {
            return bad("confusion", format!("{} rows for {c} classes", self.confusion.classes()));
        }
        if self.confusion.total() != self.n {
            return bad("confusion", format!("counts total {} but n = {}", self.confusion.total(), self.n));
        }
        for curve in &self.roc {
            let len = curve.true_positives.len();
            if curve.class >= c {
                return bad("roc", format!("class {} out of range", curve.class));
            }
            if curve.false_positives.len() != len || curve.thresholds.len() != len || len < 2 {
                return bad("roc", format!("class {} has inconsistent vertex lists", curve.class));
            }
            if curve.positives == 0 || curve.negatives == 0 {
                return bad("roc", format!("class {} has an empty side", curve.class));
            }
            let ends = (curve.true_positives[0], curve.false_positives[0], curve.true_positives[len - 1], curve.false_positives[len - 1]);
            if ends != (0, 0, curve.positives, curve.negatives) {
                return bad("roc", format!("class {} does not run from (0,0) to (1,1)", curve.class));
            }
        }
        Ok(())
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            write!(out, ",{name}").unwrap();
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(self.confusion.rows()) {
            out.push_str(name);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,support,precision,recall,f1,auc\n");
        for r in &self.per_class {
            let auc = r.auc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", r.name, r.support, r.precision, r.recall, r.f1, auc).unwrap();
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("class,threshold,fpr,tpr\n");
        for curve in &self.roc {
            let name = &self.class_names[curve.class];
            for ((fpr, tpr), t) in curve.fpr().into_iter().zip(curve.tpr()).zip(&curve.thresholds) {
                let t = t.map(|t| t.to_string()).unwrap_or_else(|| "inf".into());
                writeln!(out, "{name},{t},{fpr},{tpr}").unwrap();
            }
        }
        out
    }
}

fn write(path: &Path, contents: &str) -> Result<(), MetricsError> {
    std::fs::write(path, contents).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
}

/// Writes `report.json` and the three CSV tables into `dir`.
pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir).map_err(|source| MetricsError::Io { path: dir.display().to_string(), source })?;
    let json = serde_json::to_string_pretty(report).map_err(|e| MetricsError::Malformed(e.to_string()))?;
    write(&dir.join(REPORT_JSON), &(json + "\n"))?;
    write(&dir.join(CONFUSION_CSV), &report.confusion_csv())?;
    write(&dir.join(PER_CLASS_CSV), &report.per_class_csv())?;
    write(&dir.join(ROC_CSV), &report.roc_csv())
}

/// Reads `dir/report.json`; deserialization errors name the offending field.
pub fn read_report(dir: &Path) -> Result<EvaluationReport, MetricsError> {
    let path = dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&path).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })?;
    let report: EvaluationReport =
        serde_json::from_str(&text).map_err(|e| MetricsError::Malformed(format!("{}: {e}", path.display())))?;
    report.validate()?;
    Ok(report)
}

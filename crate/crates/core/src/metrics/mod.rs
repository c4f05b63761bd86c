//! Confusion matrix, macro precision/recall/F1, one-vs-rest ROC and AUC,
//! and report files.

mod plot;
mod report;

pub use plot::{confusion_svg, roc_svg, write_plots, CONFUSION_SVG, ROC_SVG};
pub use report::{
    full_report, read_report, write_report, ClassReport, EvaluationReport, CONFUSION_CSV, PER_CLASS_CSV, REPORT_JSON,
    ROC_CSV,
};

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("class index {index} out of range for {classes} classes")]
    OutOfRange { index: usize, classes: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("AUC undefined for class {class}: {positives} positives, {negatives} negatives")]
    Undefined { class: usize, positives: usize, negatives: usize },
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Counts indexed `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Wraps a square count matrix.
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self, MetricsError> {
        let c = counts.len();
        if c == 0 {
            return Err(MetricsError::Empty);
        }
        if let Some(row) = counts.iter().find(|r| r.len() != c) {
            return Err(MetricsError::LengthMismatch { what: "confusion row", left: row.len(), right: c });
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Samples per true class.
    pub fn supports(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

pub fn confusion(labels: &[usize], predictions: &[usize], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch { what: "labels and predictions", left: labels.len(), right: predictions.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = vec![vec![0; classes]; classes];
    for (&y, &p) in labels.iter().zip(predictions) {
        if let Some(&index) = [y, p].iter().find(|&&v| v >= classes) {
            return Err(MetricsError::OutOfRange { index, classes });
        }
        counts[y][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Per-class and macro precision, recall and F1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Unweighted mean of per-class F1.
    pub macro_f1: f64,
    /// Harmonic mean of macro precision and macro recall.
    pub harmonic_f1: f64,
    /// Classes whose precision or recall had a zero denominator and was set to 0.
    pub warnings: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Zero denominators give 0 and a warning.
pub fn macro_prf(cm: &ConfusionMatrix) -> Prf {
    let c = cm.classes();
    let mut warnings = Vec::new();
    let (mut precision, mut recall) = (Vec::with_capacity(c), Vec::with_capacity(c));
    for k in 0..c {
        let tp = cm.get(k, k);
        let predicted: usize = (0..c).map(|t| cm.get(t, k)).sum();
        let actual: usize = cm.rows()[k].iter().sum();
        precision.push(ratio(tp, predicted).unwrap_or_else(|| {
            warnings.push(format!("class {k}: never predicted, precision set to 0"));
            0.0
        }));
        recall.push(ratio(tp, actual).unwrap_or_else(|| {
            warnings.push(format!("class {k}: no true samples, recall set to 0"));
            0.0
        }));
    }
    let f1: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| harmonic(p, r)).collect();
    let (macro_precision, macro_recall) = (mean(&precision), mean(&recall));
    Prf {
        macro_f1: mean(&f1),
        harmonic_f1: harmonic(macro_precision, macro_recall),
        precision,
        recall,
        f1,
        macro_precision,
        macro_recall,
        warnings,
    }
}

/// One-vs-rest ROC curve. Vertex `i` is reached by predicting positive for
/// every score `>= thresholds[i]`; the origin has threshold `None` (+inf).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub thresholds: Vec<Option<f64>>,
}

impl RocCurve {
    pub fn tpr(&self) -> Vec<f64> {
        self.true_positives.iter().map(|&tp| tp as f64 / self.positives as f64).collect()
    }

    pub fn fpr(&self) -> Vec<f64> {
        self.false_positives.iter().map(|&fp| fp as f64 / self.negatives as f64).collect()
    }

    /// `(fpr, tpr)` vertices from (0, 0) to (1, 1).
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.fpr().into_iter().zip(self.tpr()).collect()
    }
}

/// ROC over binary labels. Equal scores form a single vertex.
pub fn roc_binary(scores: &[f64], positive: &[bool], class: usize) -> Result<RocCurve, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch { what: "scores and labels", left: scores.len(), right: positive.len() });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::InvalidScores(format!("non-finite score {bad}")));
    }
    let positives = positive.iter().filter(|&&p| p).count();
    let negatives = positive.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::Undefined { class, positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0, 0);
    let mut curve = RocCurve {
        class,
        positives,
        negatives,
        true_positives: vec![0],
        false_positives: vec![0],
        thresholds: vec![None],
    };
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.true_positives.push(tp);
        curve.false_positives.push(fp);
        curve.thresholds.push(Some(threshold));
    }
    Ok(curve)
}

/// ROC of class `class` against the rest, scored by column `class` of `scores` (`N×C`).
pub fn roc_ovr(scores: &Tensor<f64>, labels: &[usize], class: usize) -> Result<RocCurve, MetricsError> {
    let [n, c] = scores.shape()[..] else {
        return Err(MetricsError::InvalidScores(format!("expected N×C scores, got {:?}", scores.shape())));
    };
    if n != labels.len() {
        return Err(MetricsError::LengthMismatch { what: "scores and labels", left: n, right: labels.len() });
    }
    if class >= c {
        return Err(MetricsError::OutOfRange { index: class, classes: c });
    }
    if let Some(&index) = labels.iter().find(|&&y| y >= c) {
        return Err(MetricsError::OutOfRange { index, classes: c });
    }
    let column: Vec<f64> = (0..n).map(|i| scores.data()[i * c + class]).collect();
    let positive: Vec<bool> = labels.iter().map(|&y| y == class).collect();
    roc_binary(&column, &positive, class)
}

/// Trapezoidal area under the curve. Evaluated on the integer counts, so it
/// equals the pairwise statistic P(pos > neg) + ½·P(tie) up to one rounding.
pub fn auc(curve: &RocCurve) -> f64 {
    let doubled: u128 = curve
        .false_positives
        .windows(2)
        .zip(curve.true_positives.windows(2))
        .map(|(fp, tp)| (fp[1] - fp[0]) as u128 * (tp[1] + tp[0]) as u128)
        .sum();
    doubled as f64 / (2.0 * curve.positives as f64 * curve.negatives as f64)
}

use std::fmt::Write as _;
use std::path::Path;

use super::{EvaluationReport, MetricsError};

pub const ROC_SVG: &str = "roc.svg";
pub const CONFUSION_SVG: &str = "confusion.svg";

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One-vs-rest ROC curves with the chance diagonal and a per-class AUC legend.
pub fn roc_svg(report: &EvaluationReport) -> String {
    let (size, margin) = (360.0, 60.0);
    let width = size + 2.0 * margin + 180.0;
    let height = size + 2.0 * margin;
    let x = |f: f64| margin + f * size;
    let y = |t: f64| margin + (1.0 - t) * size;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#, x(v), y(0.0) + 18.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, x(0.0) - 6.0, y(v) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#, x(0.5), height - 14.0).unwrap();
    writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">True positive rate</text>"#, y(0.5), y(0.5)).unwrap();
    writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="6 4"/>"#, x(0.0), y(0.0), x(1.0), y(1.0)).unwrap();
    for (i, curve) in report.roc.iter().enumerate() {
        let color = PALETTE[curve.class % PALETTE.len()];
        let points: Vec<String> = curve.points().iter().map(|&(f, t)| format!("{:.3},{:.3}", x(f), y(t))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" ")).unwrap();
        let name = escape(&report.class_names[curve.class]);
        let auc = report.per_class[curve.class].auc.unwrap_or(f64::NAN);
        let ly = margin + 14.0 + 20.0 * i as f64;
        let lx = margin + size + 20.0;
        writeln!(s, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{ly}">{name} (AUC = {auc:.4})</text>"#, lx + 26.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" fill="gray">chance</text>"#, margin + size + 46.0, margin + 14.0 + 20.0 * report.roc.len() as f64).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Heat map of the confusion matrix, shaded by row-normalized counts.
pub fn confusion_svg(report: &EvaluationReport) -> String {
    let c = report.class_names.len();
    let (cell, left, top) = (72.0, 120.0, 60.0);
    let width = left + cell * c as f64 + 20.0;
    let height = top + cell * c as f64 + 70.0;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    let supports = report.confusion.supports();
    for (t, row) in report.confusion.rows().iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            let share = if supports[t] > 0 { count as f64 / supports[t] as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - share)).round() as u8;
            let (cx, cy) = (left + cell * p as f64, top + cell * t as f64);
            writeln!(s, r#"<rect x="{cx}" y="{cy}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/>"#).unwrap();
            let ink = if share > 0.5 { "white" } else { "black" };
            writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{count}</text>"#, cx + cell / 2.0, cy + cell / 2.0 + 4.0).unwrap();
        }
    }
    for (i, name) in report.class_names.iter().enumerate() {
        let name = escape(name);
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{name}</text>"#, left - 8.0, top + cell * i as f64 + cell / 2.0 + 4.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#, left + cell * i as f64 + cell / 2.0, top + cell * c as f64 + 18.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Predicted</text>"#, left + cell * c as f64 / 2.0, top + cell * c as f64 + 44.0).unwrap();
    let mid = top + cell * c as f64 / 2.0;
    writeln!(s, r#"<text x="16" y="{mid}" text-anchor="middle" transform="rotate(-90 16 {mid})">True</text>"#).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes `roc.svg` and `confusion.svg` into `dir`.
pub fn write_plots(dir: &Path, report: &EvaluationReport) -> Result<(), MetricsError> {
    for (file, body) in [(ROC_SVG, roc_svg(report)), (CONFUSION_SVG, confusion_svg(report))] {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(|source| MetricsError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

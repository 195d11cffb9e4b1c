use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::confusion::{confusion, image_score, scalar_metrics, ConfusionCounts};
use super::curves::{pr_curve, roc_curve};
use super::matching::match_detections;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::postprocess::Detection;

/// A metric value or the marker for a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Undefined(&'static str),
}

impl From<Option<f64>> for Metric {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Metric::Undefined("undefined"), Metric::Value)
    }
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub accuracy: Metric,
    pub f1: Metric,
    pub roc_auc: Metric,
    pub average_precision: Metric,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip)]
    pub roc_points: Vec<(f64, f64)>,
    #[serde(skip)]
    pub pr_points: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }
}

/// Metrics over a set of images. `dets[i]` must hold every detection kept
/// for image `i` (typically gated well below `gate` so the curves have
/// range) in confidence-descending order; `gts[i]` its ground truth in the
/// same pixel frame.
pub fn evaluate(
    dets: &[Vec<Detection>],
    gts: &[Vec<(usize, BBox<f32>)>],
    gate: f32,
    match_iou: f32,
) -> Result<MetricsReport> {
    if dets.len() != gts.len() || dets.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs matching nonempty lists, got {} detection sets and {} ground-truth sets",
            dets.len(),
            gts.len()
        )));
    }
    let scores: Vec<f32> = dets.iter().map(|d| image_score(d)).collect();
    let labels: Vec<bool> = gts.iter().map(|g| !g.is_empty()).collect();
    let counts = confusion(&scores, &labels, gate)?;
    let s = scalar_metrics(&counts);
    let roc = roc_curve(&scores, &labels).ok();

    let mut flagged = Vec::new();
    for (d, g) in dets.iter().zip(gts) {
        let m = match_detections(d, g, match_iou);
        flagged.extend(d.iter().zip(m.is_tp).map(|(d, tp)| (d.confidence, tp)));
    }
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    let pr = pr_curve(&flagged, total_gt).ok();

    Ok(MetricsReport {
        sensitivity: s.sensitivity.into(),
        specificity: s.specificity.into(),
        precision: s.precision.into(),
        recall: s.recall.into(),
        accuracy: s.accuracy.into(),
        f1: s.f1.into(),
        roc_auc: roc.as_ref().map(|c| c.area).into(),
        average_precision: pr.as_ref().map(|c| c.area).into(),
        tp: counts.tp,
        fp: counts.fp,
        tn: counts.tn,
        fn_: counts.fn_,
        roc_points: roc.map(|c| c.points).unwrap_or_default(),
        pr_points: pr.map(|c| c.points).unwrap_or_default(),
    })
}

fn curve_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

/// Parses a two-column CSV written by [`emit_report`].
pub fn read_curve_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = || Error::Parse {
                line: i + 1,
                message: format!("expected two numbers, got {l:?}"),
            };
            let (a, b) = l.split_once(',').ok_or_else(err)?;
            Ok((
                a.trim().parse().map_err(|_| err())?,
                b.trim().parse().map_err(|_| err())?,
            ))
        })
        .collect()
}

/// Writes `metrics.json`, `roc.csv` and `pr.csv` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("metrics serialization: {e}")))?;
    json.push('\n');
    let files = [
        ("metrics.json", json),
        ("roc.csv", curve_csv("fpr,tpr", &report.roc_points)),
        ("pr.csv", curve_csv("recall,precision", &report.pr_points)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

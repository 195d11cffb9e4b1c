use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Points of a curve plus the area under it.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
    pub area: f64,
}

fn desc(a: f32, b: f32) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// ROC points `(fpr, tpr)` from (0,0) to (1,1), one step per distinct score,
/// and the trapezoidal AUC.
pub fn roc_curve(scores: &[f32], labels: &[bool]) -> Result<Curve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| desc(scores[a], scores[b]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let area = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(Curve { points, area })
}

/// Cumulative `(recall, precision)` after each detection in descending
/// confidence order, and all-point average precision: the area under the
/// precision envelope (precision made non-increasing from the right).
/// `detections` pairs a confidence with its true-positive flag.
pub fn pr_curve(detections: &[(f32, bool)], total_gt: usize) -> Result<Curve> {
    if total_gt == 0 {
        return Err(Error::InvalidArgument(
            "precision-recall needs at least one ground-truth box".into(),
        ));
    }
    let mut sorted = detections.to_vec();
    sorted.sort_by(|a, b| desc(a.0, b.0));
    let mut points = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (k, &(_, is_tp)) in sorted.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut envelope: Vec<f64> = points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, &e) in points.iter().zip(&envelope) {
        area += (p.0 - prev_recall) * e;
        prev_recall = p.0;
    }
    Ok(Curve { points, area })
}

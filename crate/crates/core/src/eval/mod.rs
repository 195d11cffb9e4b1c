//! Image-level and detection-level metrics, ROC and PR curves, reports.

mod confusion;
mod curves;
mod matching;
mod report;

pub use confusion::{confusion, image_score, scalar_metrics, ConfusionCounts, ScalarMetrics};
pub use curves::{pr_curve, roc_curve, Curve};
pub use matching::{match_detections, MatchResult};
pub use report::{emit_report, evaluate, read_curve_csv, Metric, MetricsReport};

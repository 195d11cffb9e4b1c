//! Confidence gating, non-maximum suppression and whole-image detection.

mod detect;
mod nms;
mod output;

pub use detect::{detect_batch, detect_image, Thresholds};
pub use nms::{nms, sort_candidates};
pub use output::{format_detections, parse_detections, DetectionRecord};

/// A kept box in original-image pixels.
pub type Detection = crate::geometry::ScoredBox<f32>;

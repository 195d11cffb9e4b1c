//! Anchor-based single-stage detection of lung nodules in chest
//! radiographs, sized to train on a CPU.
//!
//! The crate covers the whole path from annotated images to evaluation
//! reports: a small reverse-mode tensor engine ([`nn`]), a scalable
//! CSP/SPP/PAN detector ([`detector`]), data loading, augmentation and a
//! synthetic dataset generator ([`data`]), training ([`train`]),
//! suppression ([`postprocess`]), metrics ([`eval`]), and file-level
//! commands tying them together ([`pipeline`]).

pub mod config;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};

/// Single-precision box, the frame used by detections.
pub type BoxF32 = geometry::BBox<f32>;
/// Double-precision box, used where loss terms need headroom.
pub type BoxF64 = geometry::BBox<f64>;

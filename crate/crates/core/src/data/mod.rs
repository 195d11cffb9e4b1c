//! Annotations, rasters, letterboxing, augmentation, dataset splits and the
//! synthetic stand-in generator.

pub mod annotation;
pub mod augment;
mod dataset;
pub mod letterbox;
pub mod raster;
mod rng;
pub mod split;
pub mod synth;

pub use annotation::{parse_annotation_text, serialize_annotations, GroundTruthBox};
pub use augment::{augment, AugmentParams};
pub use dataset::Dataset;
pub use letterbox::{letterbox, unletterbox, LetterboxMeta, Letterboxed, Unletterboxed};
pub use raster::{normalize, stack, Raster};
pub use rng::sample_rng;
pub use split::{split_dataset, DatasetManifest};
pub use synth::{synth_generate, SynthParams, SynthSummary};

/// One image with its ground truth. An empty `boxes` list marks a negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub pixels: Raster,
    pub boxes: Vec<GroundTruthBox>,
}

impl Sample {
    pub fn is_positive(&self) -> bool {
        !self.boxes.is_empty()
    }
}

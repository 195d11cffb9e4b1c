//! Scalable CSP/SPP/PAN detector and head decoding.

mod decode;
mod model;
mod spec;

pub use decode::{check_raw, decode, decode_above, decode_box, CandidateBox};
pub use model::{head_channel, Detector, RawHeadOutput};
pub use spec::{ModelSpec, ANCHORS_PER_SCALE, DEFAULT_ANCHORS, NUM_SCALES};

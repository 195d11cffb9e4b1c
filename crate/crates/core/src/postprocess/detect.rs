use super::nms::{nms, sort_candidates};
use super::Detection;
use crate::data::{letterbox, normalize, stack, unletterbox, Sample};
use crate::detector::{decode_above, Detector};
use crate::error::Result;

/// Candidates per image entering suppression, highest confidence first.
pub const MAX_CANDIDATES: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub confidence: f32,
    pub iou: f32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            confidence: 0.5,
            iou: 0.45,
        }
    }
}

/// Detections for several images from one forward pass, each list in
/// original-image pixels and in NMS keep order.
pub fn detect_batch(
    det: &Detector,
    samples: &[&Sample],
    th: &Thresholds,
) -> Result<Vec<Vec<Detection>>> {
    let size = det.spec().input_size;
    let boxed = samples
        .iter()
        .map(|s| letterbox(s, size))
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<_> = boxed.iter().map(|lb| normalize(&lb.raster)).collect();
    let raw = det.predict(stack(&images)?)?;
    let candidates = decode_above(&raw, det.spec(), th.confidence)?;
    Ok(candidates
        .iter()
        .zip(&boxed)
        .map(|(cands, lb)| {
            let mut cands = cands.clone();
            if cands.len() > MAX_CANDIDATES {
                sort_candidates(&mut cands);
                cands.truncate(MAX_CANDIDATES);
            }
            nms(&cands, th.confidence, th.iou)
                .into_iter()
                .filter_map(|c| {
                    let u = unletterbox(&c.bbox, &lb.meta);
                    (!u.degenerate).then_some(Detection { bbox: u.bbox, ..c })
                })
                .collect()
        })
        .collect())
}

pub fn detect_image(det: &Detector, sample: &Sample, th: &Thresholds) -> Result<Vec<Detection>> {
    Ok(detect_batch(det, &[sample], th)?.pop().unwrap_or_default())
}

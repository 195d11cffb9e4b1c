use std::cmp::Ordering;

use crate::detector::CandidateBox;
use crate::geometry::iou;

/// Confidence descending, then smaller `x_min`, then smaller `y_min`.
pub fn sort_candidates(boxes: &mut [CandidateBox]) {
    boxes.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
            .then(
                a.bbox
                    .x_min
                    .partial_cmp(&b.bbox.x_min)
                    .unwrap_or(Ordering::Equal),
            )
            .then(
                a.bbox
                    .y_min
                    .partial_cmp(&b.bbox.y_min)
                    .unwrap_or(Ordering::Equal),
            )
    });
}

/// Keeps candidates with confidence strictly above `conf_threshold`, then
/// greedily suppresses same-class boxes overlapping a kept one by more
/// than `iou_threshold`. Output is in keep order.
pub fn nms(
    candidates: &[CandidateBox],
    conf_threshold: f32,
    iou_threshold: f32,
) -> Vec<CandidateBox> {
    let mut live: Vec<CandidateBox> = candidates
        .iter()
        .filter(|c| c.confidence > conf_threshold)
        .copied()
        .collect();
    sort_candidates(&mut live);
    let mut suppressed = vec![false; live.len()];
    let mut kept = Vec::new();
    for i in 0..live.len() {
        if suppressed[i] {
            continue;
        }
        kept.push(live[i]);
        for j in i + 1..live.len() {
            if !suppressed[j]
                && live[j].class_id == live[i].class_id
                && iou(&live[i].bbox, &live[j].bbox) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    kept
}

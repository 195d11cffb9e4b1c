use crate::geometry::{iou, BBox};
use crate::postprocess::Detection;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// True-positive flag per detection, in input order.
    pub is_tp: Vec<bool>,
    pub unmatched_gt: usize,
}

/// Greedy matching in the given (confidence-descending) order: each
/// detection takes the unused same-class ground truth with the highest
/// IoU, if that IoU reaches `iou_threshold`. Equal IoUs go to the lower
/// ground-truth index.
pub fn match_detections(
    dets: &[Detection],
    gts: &[(usize, BBox<f32>)],
    iou_threshold: f32,
) -> MatchResult {
    let mut used = vec![false; gts.len()];
    let mut is_tp = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, f32)> = None;
        for (j, (class_id, g)) in gts.iter().enumerate() {
            if used[j] || *class_id != d.class_id {
                continue;
            }
            let v = iou(&d.bbox, g);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, v)) if v >= iou_threshold => {
                used[j] = true;
                is_tp.push(true);
            }
            _ => is_tp.push(false),
        }
    }
    MatchResult {
        is_tp,
        unmatched_gt: used.iter().filter(|&&u| !u).count(),
    }
}

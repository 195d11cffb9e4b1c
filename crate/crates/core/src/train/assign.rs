use std::collections::HashSet;

use super::config::ANCHOR_RATIO_LIMIT;
use crate::detector::{ModelSpec, ANCHORS_PER_SCALE, NUM_SCALES};
use crate::geometry::BBox;

/// A ground-truth box bound to one anchor slot of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignedTarget {
    /// Position of the image within its batch.
    pub image: usize,
    pub scale: usize,
    pub anchor: usize,
    /// Grid cell `(x, y)`.
    pub cell: (usize, usize),
    /// Box in network-input pixels.
    pub bbox: BBox<f32>,
    pub class_id: usize,
}

/// Worst side ratio between a box and an anchor.
pub fn anchor_ratio(w: f32, h: f32, anchor: (f32, f32)) -> f32 {
    let rw = w / anchor.0;
    let rh = h / anchor.1;
    rw.max(1.0 / rw).max(rh).max(1.0 / rh)
}

/// Containing cell plus the horizontal and vertical neighbors nearer the
/// box center. A center exactly halfway across a cell adds no neighbor on
/// that axis.
pub fn candidate_cells(gx: f32, gy: f32, grid: usize) -> Vec<(usize, usize)> {
    let last = grid - 1;
    let ix = (gx.floor().max(0.0) as usize).min(last);
    let iy = (gy.floor().max(0.0) as usize).min(last);
    let fx = gx - ix as f32;
    let fy = gy - iy as f32;
    let mut cells = vec![(ix, iy)];
    if fx < 0.5 && ix > 0 {
        cells.push((ix - 1, iy));
    } else if fx > 0.5 && ix < last {
        cells.push((ix + 1, iy));
    }
    if fy < 0.5 && iy > 0 {
        cells.push((ix, iy - 1));
    } else if fy > 0.5 && iy < last {
        cells.push((ix, iy + 1));
    }
    cells
}

/// Targets for one image. `gt` holds `(class_id, box)` in network-input
/// pixels. A (scale, anchor, cell) slot claimed twice keeps its first box.
pub fn assign_targets(
    image: usize,
    gt: &[(usize, BBox<f32>)],
    spec: &ModelSpec,
) -> Vec<AssignedTarget> {
    let mut out = Vec::new();
    let mut taken = HashSet::new();
    for &(class_id, bbox) in gt {
        let (cx, cy) = bbox.center();
        let (w, h) = (bbox.width(), bbox.height());
        if !(w > 0.0 && h > 0.0) {
            continue;
        }
        for scale in 0..NUM_SCALES {
            let stride = spec.strides[scale] as f32;
            let grid = spec.grid_size(scale);
            let cells = candidate_cells(cx / stride, cy / stride, grid);
            for anchor in 0..ANCHORS_PER_SCALE {
                if anchor_ratio(w, h, spec.anchors[scale][anchor]) >= ANCHOR_RATIO_LIMIT {
                    continue;
                }
                for &cell in &cells {
                    if taken.insert((scale, anchor, cell)) {
                        out.push(AssignedTarget {
                            image,
                            scale,
                            anchor,
                            cell,
                            bbox,
                            class_id,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Targets for a batch, image indices following slice order.
pub fn assign_batch(gt: &[Vec<(usize, BBox<f32>)>], spec: &ModelSpec) -> Vec<AssignedTarget> {
    gt.iter()
        .enumerate()
        .flat_map(|(i, boxes)| assign_targets(i, boxes, spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_threshold() {
        assert_eq!(anchor_ratio(10.0, 13.0, (10.0, 13.0)), 1.0);
        assert_eq!(anchor_ratio(50.0, 13.0, (10.0, 13.0)), 5.0);
        assert_eq!(anchor_ratio(2.5, 13.0, (10.0, 13.0)), 4.0);
    }

    #[test]
    fn matching_anchor_is_assigned() {
        let spec = ModelSpec::default();
        let (aw, ah) = spec.anchors[0][0];
        let b = BBox::from_center(100.0, 100.0, aw, ah);
        let t = assign_targets(0, &[(0, b)], &spec);
        assert!(t.iter().any(|t| t.scale == 0 && t.anchor == 0));
        let wide = BBox::from_center(100.0, 100.0, 5.0 * aw, ah);
        let t = assign_targets(0, &[(0, wide)], &spec);
        assert!(!t.iter().any(|t| t.scale == 0 && t.anchor == 0));
    }

    #[test]
    fn cell_center_gets_no_neighbors() {
        assert_eq!(candidate_cells(3.5, 4.5, 13), vec![(3, 4)]);
        assert_eq!(candidate_cells(3.2, 4.7, 13), vec![(3, 4), (2, 4), (3, 5)]);
        assert_eq!(candidate_cells(0.2, 12.9, 13), vec![(0, 12)]);
    }

    #[test]
    fn duplicate_slots_keep_first_box() {
        let spec = ModelSpec::default();
        let a = BBox::from_center(100.0, 100.0, 30.0, 30.0);
        let b = BBox::from_center(101.0, 101.0, 31.0, 31.0);
        let t = assign_targets(0, &[(0, a), (1, b)], &spec);
        let mut keys: Vec<_> = t.iter().map(|t| (t.scale, t.anchor, t.cell)).collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), n);
        let first: HashSet<_> = assign_targets(0, &[(0, a)], &spec)
            .iter()
            .map(|t| (t.scale, t.anchor, t.cell))
            .collect();
        for t in &t {
            assert_eq!(
                t.class_id != 0,
                !first.contains(&(t.scale, t.anchor, t.cell))
            );
        }
    }
}

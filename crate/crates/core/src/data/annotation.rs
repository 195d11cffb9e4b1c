//! Plain-text box annotations: one `class cx cy w h` line per box, all four
//! coordinates normalized to the image size.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

impl GroundTruthBox {
    /// Builds a box from normalized corners, clipping them to `[0, 1]`.
    /// Returns `None` when nothing of positive area remains.
    pub fn from_corners(class_id: usize, x0: f32, y0: f32, x1: f32, y1: f32) -> Option<Self> {
        let (x0, x1) = (x0.clamp(0.0, 1.0), x1.clamp(0.0, 1.0));
        let (y0, y1) = (y0.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
        let (w, h) = (x1 - x0, y1 - y0);
        (w > 0.0 && h > 0.0).then(|| Self {
            class_id,
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w,
            h,
        })
    }

    pub fn corners(&self) -> [f32; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }

    pub fn is_valid(&self) -> bool {
        let [x0, y0, x1, y1] = self.corners();
        let tol = 1e-5;
        self.w > 0.0
            && self.h > 0.0
            && x0 >= -tol
            && y0 >= -tol
            && x1 <= 1.0 + tol
            && y1 <= 1.0 + tol
    }
}

pub fn parse_annotation_text(text: &str) -> Result<Vec<GroundTruthBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let class_id: i64 = fields[0]
            .parse()
            .map_err(|_| err(format!("class id {:?} is not an integer", fields[0])))?;
        if class_id < 0 {
            return Err(err(format!("negative class id {class_id}")));
        }
        let mut v = [0.0f32; 4];
        for (slot, (name, tok)) in v
            .iter_mut()
            .zip(["cx", "cy", "w", "h"].into_iter().zip(&fields[1..]))
        {
            let x: f32 = tok
                .parse()
                .map_err(|_| err(format!("{name} {tok:?} is not a number")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(err(format!("{name} = {x} outside [0, 1]")));
            }
            *slot = x;
        }
        let [cx, cy, w, h] = v;
        if w <= 0.0 || h <= 0.0 {
            return Err(err("box has zero width or height".to_string()));
        }
        let b = GroundTruthBox::from_corners(
            class_id as usize,
            cx - w / 2.0,
            cy - h / 2.0,
            cx + w / 2.0,
            cy + h / 2.0,
        )
        .ok_or_else(|| err("box lies outside the image".to_string()))?;
        // keep the literal values when no clipping was needed
        let unclipped = cx - w / 2.0 >= 0.0
            && cy - h / 2.0 >= 0.0
            && cx + w / 2.0 <= 1.0
            && cy + h / 2.0 <= 1.0;
        boxes.push(if unclipped {
            GroundTruthBox {
                class_id: class_id as usize,
                cx,
                cy,
                w,
                h,
            }
        } else {
            b
        });
    }
    Ok(boxes)
}

/// Inverse of [`parse_annotation_text`], six decimals per coordinate.
pub fn serialize_annotations(boxes: &[GroundTruthBox]) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(
            s,
            "{} {:.6} {:.6} {:.6} {:.6}",
            b.class_id, b.cx, b.cy, b.w, b.h
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_box() {
        let b = parse_annotation_text("0 0.5 0.5 0.2 0.3").unwrap();
        assert_eq!(
            b,
            vec![GroundTruthBox {
                class_id: 0,
                cx: 0.5,
                cy: 0.5,
                w: 0.2,
                h: 0.3
            }]
        );
    }

    #[test]
    fn empty_and_blank_lines() {
        assert!(parse_annotation_text("").unwrap().is_empty());
        assert_eq!(
            parse_annotation_text("\n  \n0 0.5 0.5 0.1 0.1\n\n")
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn malformed_lines() {
        let e = parse_annotation_text("0 0.5 0.5 0.2").unwrap_err();
        assert_eq!(e.to_string(), "line 1: expected 5 fields, got 4");
        let e = parse_annotation_text("0 0.5 0.5 0.2 0.2\n0 0.5 x 0.2 0.2").unwrap_err();
        assert!(e.to_string().starts_with("line 2:"), "{e}");
        assert!(parse_annotation_text("-1 0.5 0.5 0.2 0.2").is_err());
        assert!(parse_annotation_text("0 1.5 0.5 0.2 0.2").is_err());
        assert!(parse_annotation_text("0 0.5 0.5 0 0.2").is_err());
        assert!(parse_annotation_text("a 0.5 0.5 0.2 0.2").is_err());
    }

    #[test]
    fn overhanging_box_is_clipped() {
        let b = parse_annotation_text("0 0.95 0.5 0.2 0.2").unwrap()[0];
        assert!(b.is_valid());
        assert!((b.corners()[2] - 1.0).abs() < 1e-6);
        assert!((b.w - 0.15).abs() < 1e-6);
    }

    fn canonical() -> impl Strategy<Value = Vec<GroundTruthBox>> {
        prop::collection::vec(
            (
                0usize..3,
                0.05f32..0.95,
                0.05f32..0.95,
                0.01f32..0.1,
                0.01f32..0.1,
            ),
            0..8,
        )
        .prop_map(|v| {
            let text: String = v
                .iter()
                .map(|&(c, x, y, w, h)| format!("{c} {x:.6} {y:.6} {w:.6} {h:.6}\n"))
                .collect();
            parse_annotation_text(&text).unwrap()
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(boxes in canonical()) {
            let back = parse_annotation_text(&serialize_annotations(&boxes)).unwrap();
            prop_assert_eq!(back, boxes);
        }
    }
}

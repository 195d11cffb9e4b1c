use std::cmp::Ordering;
use std::fmt::Write as _;

use super::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub detection: Detection,
}

/// `image_id class_id confidence x_min y_min x_max y_max`, two decimals,
/// sorted by image id then confidence descending.
pub fn format_detections(records: &[DetectionRecord]) -> String {
    let mut sorted: Vec<&DetectionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.image_id.cmp(&b.image_id).then(
            b.detection
                .confidence
                .partial_cmp(&a.detection.confidence)
                .unwrap_or(Ordering::Equal),
        )
    });
    let mut s = String::new();
    for r in sorted {
        let d = &r.detection;
        let _ = writeln!(
            s,
            "{} {} {:.2} {:.2} {:.2} {:.2} {:.2}",
            r.image_id,
            d.class_id,
            d.confidence,
            d.bbox.x_min,
            d.bbox.y_min,
            d.bbox.x_max,
            d.bbox.y_max
        );
    }
    s
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", fields.len())));
        }
        let class_id = fields[1]
            .parse()
            .map_err(|_| err(format!("invalid class {:?}", fields[1])))?;
        let mut v = [0f32; 5];
        for (slot, tok) in v.iter_mut().zip(&fields[2..]) {
            *slot = tok
                .parse()
                .map_err(|_| err(format!("invalid number {tok:?}")))?;
        }
        out.push(DetectionRecord {
            image_id: fields[0].to_string(),
            detection: Detection {
                bbox: BBox::new(v[1], v[2], v[3], v[4]),
                confidence: v[0],
                class_id,
            },
        });
    }
    Ok(out)
}

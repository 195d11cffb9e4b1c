use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_SCALES: usize = 3;
pub const ANCHORS_PER_SCALE: usize = 3;

/// Everything that determines the network graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub width_multiple: f32,
    pub depth_multiple: f32,
    pub num_classes: usize,
    pub input_size: usize,
    pub strides: [usize; NUM_SCALES],
    /// `(width, height)` in input pixels; row `i` belongs to `strides[i]`.
    pub anchors: [[(f32, f32); ANCHORS_PER_SCALE]; NUM_SCALES],
}

pub const DEFAULT_ANCHORS: [[(f32, f32); 3]; 3] = [
    [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
    [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
];

impl Default for ModelSpec {
    /// Desk-scale network: an eighth of the reference width, a third of its depth.
    fn default() -> Self {
        Self {
            width_multiple: 0.125,
            depth_multiple: 0.33,
            num_classes: 1,
            input_size: 416,
            strides: [8, 16, 32],
            anchors: DEFAULT_ANCHORS,
        }
    }
}

impl ModelSpec {
    /// The "small" compound scale (width 0.5, depth 0.33).
    pub fn small() -> Self {
        Self {
            width_multiple: 0.5,
            ..Self::default()
        }
    }

    /// Outputs per anchor: box (4), objectness (1), class scores.
    pub fn outputs_per_anchor(&self) -> usize {
        5 + self.num_classes
    }

    pub fn head_channels(&self) -> usize {
        ANCHORS_PER_SCALE * self.outputs_per_anchor()
    }

    pub fn grid_size(&self, scale: usize) -> usize {
        self.input_size / self.strides[scale]
    }

    /// Reference channel count scaled by `width_multiple`, rounded to the
    /// nearest multiple of 8 (at least 8).
    pub fn channels(&self, reference: usize) -> usize {
        let scaled = reference as f32 * self.width_multiple / 8.0;
        ((scaled.round() as usize) * 8).max(8)
    }

    /// Reference block repeat count scaled by `depth_multiple`, at least 1.
    pub fn depth(&self, reference: usize) -> usize {
        ((reference as f32 * self.depth_multiple).round() as usize).max(1)
    }

    pub fn anchors_flat(&self) -> Vec<f32> {
        self.anchors
            .iter()
            .flat_map(|s| s.iter().flat_map(|&(w, h)| [w, h]))
            .collect()
    }

    pub fn set_anchors_flat(&mut self, flat: &[f32]) -> Result<()> {
        if flat.len() != 2 * ANCHORS_PER_SCALE * NUM_SCALES {
            return Err(Error::InvalidSpec(format!(
                "anchors needs {} numbers, got {}",
                2 * ANCHORS_PER_SCALE * NUM_SCALES,
                flat.len()
            )));
        }
        for (i, pair) in flat.chunks(2).enumerate() {
            self.anchors[i / ANCHORS_PER_SCALE][i % ANCHORS_PER_SCALE] = (pair[0], pair[1]);
        }
        Ok(())
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("width_multiple", self.width_multiple),
            ("depth_multiple", self.depth_multiple),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                problems.push(format!("{name} = {v} not in (0, 1]"));
            }
        }
        if self.num_classes < 1 {
            problems.push("num_classes must be ≥ 1".to_string());
        }
        if self.strides != [8, 16, 32] {
            problems.push(format!(
                "strides must be [8, 16, 32], got {:?}",
                self.strides
            ));
        }
        let max_stride = self.strides.iter().copied().max().unwrap_or(1).max(1);
        if self.input_size == 0
            || !self.input_size.is_multiple_of(32)
            || !self.input_size.is_multiple_of(max_stride)
        {
            problems.push(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            ));
        }
        if self
            .anchors
            .iter()
            .flatten()
            .any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()))
        {
            problems.push("anchors must be strictly positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems.join("; ")))
        }
    }
}

use super::model::{head_channel, RawHeadOutput};
use super::spec::{ModelSpec, ANCHORS_PER_SCALE, NUM_SCALES};
use crate::error::{Error, Result};
use crate::geometry::{BBox, ScoredBox};
use crate::nn::kernels::sigmoid;

/// Decoded prediction in network-input pixels.
pub type CandidateBox = ScoredBox<f32>;

/// Box center and size from raw offsets for cell `(cx, cy)`:
/// `center = (2σ(t) − 0.5 + cell)·stride`, `size = (2σ(t))²·anchor`.
pub fn decode_box(t: [f32; 4], cell: (usize, usize), stride: f32, anchor: (f32, f32)) -> [f32; 4] {
    let s = t.map(sigmoid);
    [
        (2.0 * s[0] - 0.5 + cell.0 as f32) * stride,
        (2.0 * s[1] - 0.5 + cell.1 as f32) * stride,
        (2.0 * s[2]).powi(2) * anchor.0,
        (2.0 * s[3]).powi(2) * anchor.1,
    ]
}

pub fn check_raw(raw: &RawHeadOutput, spec: &ModelSpec) -> Result<usize> {
    let n = raw.maps[0].shape().first().copied().unwrap_or(0);
    for (i, m) in raw.maps.iter().enumerate() {
        let g = spec.grid_size(i);
        let want = [n, spec.head_channels(), g, g];
        if m.shape() != want {
            return Err(Error::Shape(format!(
                "head map {i}: expected {want:?}, got {:?}",
                m.shape()
            )));
        }
    }
    Ok(n)
}

/// Every anchor of every cell, per image, before any thresholding.
pub fn decode(raw: &RawHeadOutput, spec: &ModelSpec) -> Result<Vec<Vec<CandidateBox>>> {
    decode_above(raw, spec, f32::NEG_INFINITY)
}

/// As [`decode`] but skips candidates whose confidence is not above `min_conf`.
pub fn decode_above(
    raw: &RawHeadOutput,
    spec: &ModelSpec,
    min_conf: f32,
) -> Result<Vec<Vec<CandidateBox>>> {
    let n = check_raw(raw, spec)?;
    let size = spec.input_size as f32;
    let mut out = vec![Vec::new(); n];
    for (img, boxes) in out.iter_mut().enumerate() {
        for scale in 0..NUM_SCALES {
            let map = &raw.maps[scale];
            let g = spec.grid_size(scale);
            let plane = g * g;
            let base = img * spec.head_channels() * plane;
            let data = &map.data()[base..base + spec.head_channels() * plane];
            let stride = spec.strides[scale] as f32;
            for a in 0..ANCHORS_PER_SCALE {
                let at = |k: usize, cell: usize| data[head_channel(spec, a, k) * plane + cell];
                for cy in 0..g {
                    for cx in 0..g {
                        let cell = cy * g + cx;
                        let (class_id, cls) = (0..spec.num_classes)
                            .map(|c| (c, sigmoid(at(5 + c, cell))))
                            .fold((0, f32::NEG_INFINITY), |best, cur| {
                                if cur.1 > best.1 {
                                    cur
                                } else {
                                    best
                                }
                            });
                        let confidence = sigmoid(at(4, cell)) * cls;
                        if confidence <= min_conf {
                            continue;
                        }
                        let [x, y, w, h] = decode_box(
                            [at(0, cell), at(1, cell), at(2, cell), at(3, cell)],
                            (cx, cy),
                            stride,
                            spec.anchors[scale][a],
                        );
                        boxes.push(CandidateBox {
                            bbox: BBox::from_center(x, y, w, h).clip(size, size),
                            confidence,
                            class_id,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn zeros(spec: &ModelSpec) -> RawHeadOutput {
        RawHeadOutput {
            maps: [0, 1, 2].map(|i| {
                let g = spec.grid_size(i);
                Tensor::zeros(&[1, spec.head_channels(), g, g])
            }),
        }
    }

    #[test]
    fn zero_logits() {
        let spec = ModelSpec::default();
        let c = decode(&zeros(&spec), &spec).unwrap();
        assert_eq!(c[0].len(), 3 * (52 * 52 + 26 * 26 + 13 * 13));
        for b in &c[0] {
            assert!((b.confidence - 0.25).abs() < 1e-7);
        }
        // cell (3, 4) at stride 8, anchor 0 → center (28, 36), size = anchor
        let b = c[0][4 * 52 + 3];
        let (x, y) = b.bbox.center();
        assert!((x - 28.0).abs() < 1e-5 && (y - 36.0).abs() < 1e-5);
        assert!((b.bbox.width() - 10.0).abs() < 1e-5);
        assert!((b.bbox.height() - 13.0).abs() < 1e-5);
    }

    #[test]
    fn saturated_logits_give_full_confidence() {
        let spec = ModelSpec::default();
        let mut raw = zeros(&spec);
        let plane = 13 * 13;
        let d = raw.maps[2].data_mut();
        d[4 * plane] = 100.0;
        d[5 * plane] = 100.0;
        let c = decode(&raw, &spec).unwrap();
        let best = c[0].iter().map(|b| b.confidence).fold(0.0, f32::max);
        assert!((best - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decode_box_ranges() {
        for t in [-30.0f32, -2.0, 0.0, 1.5, 30.0] {
            let [x, y, w, h] = decode_box([t, t, t, t], (5, 7), 16.0, (30.0, 61.0));
            assert!(x / 16.0 >= 4.5 && x / 16.0 <= 6.5);
            assert!(y / 16.0 >= 6.5 && y / 16.0 <= 8.5);
            assert!((0.0..=4.0 * 30.0).contains(&w));
            assert!((0.0..=4.0 * 61.0).contains(&h));
        }
    }

    #[test]
    fn wrong_shape_rejected() {
        let spec = ModelSpec::default();
        let mut raw = zeros(&spec);
        raw.maps[1] = Tensor::zeros(&[1, 18, 13, 13]);
        assert!(decode(&raw, &spec).is_err());
    }
}

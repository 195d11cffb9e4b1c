//! Random flip, rotation and crop, each applied with its own probability.

use rand::Rng;

use super::annotation::GroundTruthBox;
use super::letterbox::PAD_VALUE;
use super::raster::Raster;
use super::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip_p: f32,
    pub rotate_p: f32,
    pub max_rotation_deg: f32,
    pub crop_p: f32,
    /// Smallest fraction of the image area a crop keeps.
    pub min_crop_area: f32,
    /// Boxes keeping less than this fraction of their area are dropped.
    pub min_box_keep: f32,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            rotate_p: 0.5,
            max_rotation_deg: 10.0,
            crop_p: 0.5,
            min_crop_area: 0.8,
            min_box_keep: 0.25,
        }
    }
}

impl AugmentParams {
    pub fn none() -> Self {
        Self {
            flip_p: 0.0,
            rotate_p: 0.0,
            crop_p: 0.0,
            ..Self::default()
        }
    }
}

/// Draws every random choice up front (so the stream consumed does not
/// depend on the image), then applies flip → rotation → crop.
pub fn augment<R: Rng>(sample: &Sample, rng: &mut R, params: &AugmentParams) -> Sample {
    let flip = rng.random::<f32>() < params.flip_p;
    let rotate = rng.random::<f32>() < params.rotate_p;
    let angle = rng.random_range(-1.0f32..=1.0) * params.max_rotation_deg;
    let crop = rng.random::<f32>() < params.crop_p;
    let crop_u: [f32; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];

    let mut out = sample.clone();
    if flip {
        out = hflip(&out);
    }
    if rotate {
        out = rotate_sample(&out, angle);
    }
    if crop {
        out = crop_sample(&out, crop_u, params);
    }
    out
}

pub fn hflip(s: &Sample) -> Sample {
    let r = &s.pixels;
    let mut data = vec![0u8; r.data.len()];
    for y in 0..r.height {
        for x in 0..r.width {
            let src = (y * r.width + (r.width - 1 - x)) * r.channels;
            let dst = (y * r.width + x) * r.channels;
            data[dst..dst + r.channels].copy_from_slice(&r.data[src..src + r.channels]);
        }
    }
    Sample {
        image_id: s.image_id.clone(),
        pixels: Raster { data, ..r.clone() },
        boxes: s
            .boxes
            .iter()
            .map(|b| GroundTruthBox {
                cx: 1.0 - b.cx,
                ..*b
            })
            .collect(),
    }
}

/// Rotates pixel point `(x, y)` by `deg` about `(cx, cy)`.
pub fn rotate_point(x: f32, y: f32, cx: f32, cy: f32, deg: f32) -> (f32, f32) {
    let (sin, cos) = deg.to_radians().sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * cos - dy * sin, cy + dx * sin + dy * cos)
}

/// Axis-aligned hull of the four rotated corners, in pixels.
pub fn rotated_hull(corners: [f32; 4], cx: f32, cy: f32, deg: f32) -> [f32; 4] {
    let [x0, y0, x1, y1] = corners;
    let pts =
        [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| rotate_point(x, y, cx, cy, deg));
    let xs = pts.map(|p| p.0);
    let ys = pts.map(|p| p.1);
    [
        xs.iter().copied().fold(f32::INFINITY, f32::min),
        ys.iter().copied().fold(f32::INFINITY, f32::min),
        xs.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        ys.iter().copied().fold(f32::NEG_INFINITY, f32::max),
    ]
}

pub fn rotate_sample(s: &Sample, deg: f32) -> Sample {
    if deg == 0.0 {
        return s.clone();
    }
    let r = &s.pixels;
    let (w, h) = (r.width as f32, r.height as f32);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let mut data = vec![PAD_VALUE; r.data.len()];
    for y in 0..r.height {
        for x in 0..r.width {
            // inverse-map the output pixel center into the source
            let (sx, sy) = rotate_point(x as f32 + 0.5, y as f32 + 0.5, cx, cy, -deg);
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            if fx < 0.0 || fy < 0.0 || fx > w - 1.0 || fy > h - 1.0 {
                continue;
            }
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(r.width - 1), (y0 + 1).min(r.height - 1));
            let (ax, ay) = (fx - x0 as f32, fy - y0 as f32);
            for c in 0..r.channels {
                let p = |xx: usize, yy: usize| r.data[(yy * r.width + xx) * r.channels + c] as f32;
                let v = (p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax) * (1.0 - ay)
                    + (p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax) * ay;
                data[(y * r.width + x) * r.channels + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let boxes = s
        .boxes
        .iter()
        .filter_map(|b| {
            let [x0, y0, x1, y1] = b.corners();
            let hull = rotated_hull([x0 * w, y0 * h, x1 * w, y1 * h], cx, cy, deg);
            GroundTruthBox::from_corners(
                b.class_id,
                hull[0] / w,
                hull[1] / h,
                hull[2] / w,
                hull[3] / h,
            )
        })
        .collect();
    Sample {
        image_id: s.image_id.clone(),
        pixels: Raster { data, ..r.clone() },
        boxes,
    }
}

/// Crops a window covering at least `min_crop_area` of the image. `u` are
/// four uniform draws selecting width, height and offsets.
pub fn crop_sample(s: &Sample, u: [f32; 4], params: &AugmentParams) -> Sample {
    let r = &s.pixels;
    let (w, h) = (r.width, r.height);
    let min_area = params.min_crop_area.clamp(0.0, 1.0);
    let fw = min_area + (1.0 - min_area) * u[0];
    let cw = ((fw * w as f32).ceil() as usize).clamp(1, w);
    let min_fh = (min_area * (w * h) as f32 / cw as f32 / h as f32).min(1.0);
    let fh = min_fh + (1.0 - min_fh) * u[1];
    let mut ch = ((fh * h as f32).ceil() as usize).clamp(1, h);
    while cw * ch < (min_area * (w * h) as f32).ceil() as usize && ch < h {
        ch += 1;
    }
    let ox = ((u[2] * (w - cw + 1) as f32) as usize).min(w - cw);
    let oy = ((u[3] * (h - ch + 1) as f32) as usize).min(h - ch);

    let mut data = Vec::with_capacity(cw * ch * r.channels);
    for y in oy..oy + ch {
        let start = (y * w + ox) * r.channels;
        data.extend_from_slice(&r.data[start..start + cw * r.channels]);
    }
    let boxes = s
        .boxes
        .iter()
        .filter_map(|b| {
            let [x0, y0, x1, y1] = b.corners();
            let (px0, py0, px1, py1) = (x0 * w as f32, y0 * h as f32, x1 * w as f32, y1 * h as f32);
            let area = (px1 - px0) * (py1 - py0);
            let cx0 = px0.max(ox as f32) - ox as f32;
            let cy0 = py0.max(oy as f32) - oy as f32;
            let cx1 = px1.min((ox + cw) as f32) - ox as f32;
            let cy1 = py1.min((oy + ch) as f32) - oy as f32;
            let kept = (cx1 - cx0).max(0.0) * (cy1 - cy0).max(0.0);
            if kept <= 0.0 || kept < params.min_box_keep * area {
                return None;
            }
            GroundTruthBox::from_corners(
                b.class_id,
                cx0 / cw as f32,
                cy0 / ch as f32,
                cx1 / cw as f32,
                cy1 / ch as f32,
            )
        })
        .collect();
    Sample {
        image_id: s.image_id.clone(),
        pixels: Raster {
            width: cw,
            height: ch,
            channels: r.channels,
            data,
        },
        boxes,
    }
}

//! Seeded stand-in for chest radiographs: a smooth background with rib-like
//! bands and pixel noise, plus bright Gaussian blobs playing the nodules.

use std::f32::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::annotation::{serialize_annotations, GroundTruthBox};
use super::raster::Raster;
use super::rng::sample_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub count: usize,
    pub positive_fraction: f64,
    pub image_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub images: usize,
    pub positives: usize,
    pub negatives: usize,
    pub boxes: usize,
}

/// A nodule stand-in in pixel coordinates. Its box spans `center ± 2σ`,
/// with `σ = radius / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub cx: f32,
    pub cy: f32,
    pub radius: f32,
    pub contrast: f32,
}

impl Blob {
    pub fn sigma(&self) -> f32 {
        self.radius / 2.0
    }

    pub fn pixel_box(&self) -> [f32; 4] {
        let h = 2.0 * self.sigma();
        [self.cx - h, self.cy - h, self.cx + h, self.cy + h]
    }

    /// Added intensity at the center of pixel `(x, y)`.
    pub fn intensity(&self, x: usize, y: usize) -> f32 {
        let dx = x as f32 + 0.5 - self.cx;
        let dy = y as f32 + 0.5 - self.cy;
        let s = self.sigma();
        self.contrast * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub raster: Raster,
    pub blobs: Vec<Blob>,
}

impl SynthImage {
    pub fn boxes(&self) -> Vec<GroundTruthBox> {
        let s = self.raster.width as f32;
        self.blobs
            .iter()
            .filter_map(|b| {
                let [x0, y0, x1, y1] = b.pixel_box();
                GroundTruthBox::from_corners(0, x0 / s, y0 / s, x1 / s, y1 / s)
            })
            .collect()
    }
}

fn overlaps(a: [f32; 4], b: [f32; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

fn place_blobs<R: Rng>(rng: &mut R, size: usize) -> Vec<Blob> {
    let s = size as f32;
    let max_r = 40.0f32.min(s / 2.0 - 1.0).max(8.0);
    let wanted = rng.random_range(1..=3);
    let mut blobs: Vec<Blob> = Vec::with_capacity(wanted);
    for _ in 0..wanted {
        for _attempt in 0..100 {
            let radius = rng.random_range(8.0..=max_r);
            let lo = radius.min(s / 2.0);
            let cx = rng.random_range(lo..=s - lo);
            let cy = rng.random_range(lo..=s - lo);
            let contrast = rng.random_range(40.0..=90.0);
            let b = Blob {
                cx,
                cy,
                radius,
                contrast,
            };
            if blobs
                .iter()
                .all(|o| !overlaps(o.pixel_box(), b.pixel_box()))
            {
                blobs.push(b);
                break;
            }
        }
    }
    blobs
}

/// Renders one image. `noise = false` gives the clean intensity field.
pub fn render<R: Rng>(rng: &mut R, size: usize, positive: bool, noise: bool) -> SynthImage {
    let s = size as f32;
    let top = rng.random_range(50.0f32..90.0);
    let bottom = rng.random_range(110.0f32..160.0);
    let rib_period = s / rng.random_range(6.0f32..10.0);
    let rib_phase = rng.random_range(0.0..2.0 * PI);
    let rib_amp = rng.random_range(10.0f32..20.0);
    let rib_bend = rng.random_range(0.2f32..0.6);
    let blobs = if positive {
        place_blobs(rng, size)
    } else {
        Vec::new()
    };
    let normal = Normal::new(0.0f32, 8.0).expect("valid sigma");

    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = (y as f32 + 0.5) / s;
        let base = top + (bottom - top) * fy;
        for x in 0..size {
            let fx = (x as f32 + 0.5) / s - 0.5;
            let bent = y as f32 + rib_bend * s * fx * fx;
            let mut v = base + rib_amp * (2.0 * PI * bent / rib_period + rib_phase).sin();
            for b in &blobs {
                v += b.intensity(x, y);
            }
            if noise {
                v += normal.sample(rng);
            }
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    SynthImage {
        raster: Raster {
            width: size,
            height: size,
            channels: 1,
            data,
        },
        blobs,
    }
}

pub fn image_ids(count: usize) -> Vec<String> {
    let digits = count.saturating_sub(1).to_string().len().max(4);
    (0..count).map(|i| format!("img_{i:0digits$}")).collect()
}

/// Writes `images/<id>.png` and `labels/<id>.txt` under `out`.
pub fn synth_generate(params: &SynthParams, out: &Path) -> Result<SynthSummary> {
    if params.count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&params.positive_fraction) {
        return Err(Error::InvalidArgument(format!(
            "positive fraction must lie in [0, 1], got {}",
            params.positive_fraction
        )));
    }
    if params.image_size < 32 {
        return Err(Error::InvalidArgument(format!(
            "image size must be at least 32, got {}",
            params.image_size
        )));
    }
    let images_dir = out.join("images");
    let labels_dir = out.join("labels");
    for d in [&images_dir, &labels_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let ids = image_ids(params.count);
    let n_pos = (params.count as f64 * params.positive_fraction).round() as usize;
    let mut positive = vec![false; params.count];
    positive[..n_pos].iter_mut().for_each(|p| *p = true);
    positive.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let box_counts = ids
        .par_iter()
        .zip(positive.par_iter())
        .map(|(id, &pos)| -> Result<usize> {
            let mut rng = sample_rng(params.seed, id, u64::MAX);
            let img = render(&mut rng, params.image_size, pos, true);
            let boxes = img.boxes();
            img.raster.save_png(&images_dir.join(format!("{id}.png")))?;
            let label = labels_dir.join(format!("{id}.txt"));
            std::fs::write(&label, serialize_annotations(&boxes))
                .map_err(|e| Error::io(&label, e))?;
            Ok(boxes.len())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthSummary {
        images: params.count,
        positives: n_pos,
        negatives: params.count - n_pos,
        boxes: box_counts.iter().sum(),
    })
}

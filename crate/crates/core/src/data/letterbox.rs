//! Aspect-preserving resize onto a square canvas and its inverse.

use num_traits::Float;

use super::annotation::GroundTruthBox;
use super::raster::Raster;
use super::Sample;
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const PAD_VALUE: u8 = 114;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterboxMeta {
    /// `input_size / max(original_w, original_h)`.
    pub scale: f32,
    pub pad_left: usize,
    pub pad_top: usize,
    pub original_w: usize,
    pub original_h: usize,
    /// Size of the resized image inside the canvas (rounded).
    pub resized_w: usize,
    pub resized_h: usize,
}

impl LetterboxMeta {
    pub fn new(original_w: usize, original_h: usize, input_size: usize) -> Result<Self> {
        if original_w == 0 || original_h == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot letterbox a {original_w}×{original_h} image"
            )));
        }
        if input_size == 0 {
            return Err(Error::InvalidArgument("input_size must be > 0".into()));
        }
        let scale = input_size as f32 / original_w.max(original_h) as f32;
        let resized_w = ((original_w as f32 * scale).round() as usize).clamp(1, input_size);
        let resized_h = ((original_h as f32 * scale).round() as usize).clamp(1, input_size);
        Ok(Self {
            scale,
            pad_left: (input_size - resized_w) / 2,
            pad_top: (input_size - resized_h) / 2,
            original_w,
            original_h,
            resized_w,
            resized_h,
        })
    }

    fn sx(&self) -> f64 {
        self.resized_w as f64 / self.original_w as f64
    }

    fn sy(&self) -> f64 {
        self.resized_h as f64 / self.original_h as f64
    }

    /// Original-image pixel box → canvas pixel box.
    pub fn forward<T: Float>(&self, b: &BBox<T>) -> BBox<T> {
        let t = |v: f64| T::from(v).unwrap();
        let f = |v: T| v.to_f64().unwrap();
        BBox::new(
            t(f(b.x_min) * self.sx() + self.pad_left as f64),
            t(f(b.y_min) * self.sy() + self.pad_top as f64),
            t(f(b.x_max) * self.sx() + self.pad_left as f64),
            t(f(b.y_max) * self.sy() + self.pad_top as f64),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Letterboxed {
    pub raster: Raster,
    pub meta: LetterboxMeta,
    /// Ground truth in canvas pixels.
    pub boxes: Vec<(usize, BBox<f32>)>,
}

/// Bilinear resample with half-pixel centers. Same-size input is copied.
pub fn resize_bilinear(src: &Raster, width: usize, height: usize) -> Raster {
    if width == src.width && height == src.height {
        return src.clone();
    }
    let ch = src.channels;
    let mut out = vec![0u8; width * height * ch];
    let fx = src.width as f32 / width as f32;
    let fy = src.height as f32 / height as f32;
    let axis = |o: usize, f: f32, len: usize| {
        let s = ((o as f32 + 0.5) * f - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f32)
    };
    for y in 0..height {
        let (y0, y1, wy) = axis(y, fy, src.height);
        for x in 0..width {
            let (x0, x1, wx) = axis(x, fx, src.width);
            for c in 0..ch {
                let p = |xx: usize, yy: usize| src.data[(yy * src.width + xx) * ch + c] as f32;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                let v = top * (1.0 - wy) + bot * wy;
                out[(y * width + x) * ch + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Raster {
        width,
        height,
        channels: ch,
        data: out,
    }
}

pub fn letterbox(sample: &Sample, input_size: usize) -> Result<Letterboxed> {
    let src = &sample.pixels;
    let meta = LetterboxMeta::new(src.width, src.height, input_size)?;
    let resized = resize_bilinear(src, meta.resized_w, meta.resized_h);
    let ch = src.channels;
    let mut canvas = Raster::filled(input_size, input_size, ch, PAD_VALUE);
    for y in 0..meta.resized_h {
        let dst = ((y + meta.pad_top) * input_size + meta.pad_left) * ch;
        let srow = y * meta.resized_w * ch;
        canvas.data[dst..dst + meta.resized_w * ch]
            .copy_from_slice(&resized.data[srow..srow + meta.resized_w * ch]);
    }
    let boxes = sample
        .boxes
        .iter()
        .map(|b| {
            (
                b.class_id,
                meta.forward(&gt_to_pixels(b, src.width, src.height)),
            )
        })
        .collect();
    Ok(Letterboxed {
        raster: canvas,
        meta,
        boxes,
    })
}

pub fn gt_to_pixels(b: &GroundTruthBox, width: usize, height: usize) -> BBox<f32> {
    let [x0, y0, x1, y1] = b.corners();
    BBox::new(
        x0 * width as f32,
        y0 * height as f32,
        x1 * width as f32,
        y1 * height as f32,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unletterboxed<T> {
    pub bbox: BBox<T>,
    /// The box had no area left inside the original image.
    pub degenerate: bool,
}

/// Canvas pixel box → original-image pixel box, clipped to the image.
pub fn unletterbox<T: Float>(b: &BBox<T>, meta: &LetterboxMeta) -> Unletterboxed<T> {
    let t = |v: f64| T::from(v).unwrap();
    let f = |v: T| v.to_f64().unwrap();
    let (px, py) = (meta.pad_left as f64, meta.pad_top as f64);
    let raw = BBox::new(
        t((f(b.x_min) - px) / meta.sx()),
        t((f(b.y_min) - py) / meta.sy()),
        t((f(b.x_max) - px) / meta.sx()),
        t((f(b.y_max) - py) / meta.sy()),
    );
    let bbox = raw.clip(t(meta.original_w as f64), t(meta.original_h as f64));
    Unletterboxed {
        degenerate: bbox.is_degenerate(),
        bbox,
    }
}

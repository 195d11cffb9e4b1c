use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::InvalidArgument(format!(
                "raster needs 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}×{height}×{channels} raster with {} bytes",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// PNG or JPEG. Grayscale files stay single-channel; anything else is
    /// converted to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color() {
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 => {
                Self::new(w, h, 1, img.to_luma8().into_raw())
            }
            _ => Self::new(w, h, 3, img.to_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Scales bytes to `[0, 1]`, replicating gray to three channels:
/// `[3, H, W]`.
pub fn normalize(r: &Raster) -> Tensor {
    let plane = r.width * r.height;
    let mut out = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        let src_c = if r.channels == 1 { 0 } else { c };
        for i in 0..plane {
            out[c * plane + i] = r.data[i * r.channels + src_c] as f32 / 255.0;
        }
    }
    Tensor::new(&[3, r.height, r.width], out).expect("raster dimensions are nonzero")
}

/// Stacks `[3, S, S]` images into `[N, 3, S, S]`.
pub fn stack(images: &[Tensor]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * first.numel());
    for t in images {
        if t.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "batch mixes shapes {shape:?} and {:?}",
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![images.len()];
    full.extend(shape);
    Tensor::new(&full, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_values() {
        let r = Raster::new(3, 1, 1, vec![0, 255, 128]).unwrap();
        let t = normalize(&r);
        assert_eq!(t.shape(), &[3, 1, 3]);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 1.0);
        assert!((t.data()[2] - 0.50196).abs() < 1e-5);
        // gray replicated
        assert_eq!(&t.data()[0..3], &t.data()[3..6]);
        assert_eq!(&t.data()[0..3], &t.data()[6..9]);
    }

    #[test]
    fn rgb_channels_split() {
        let r = Raster::new(1, 1, 3, vec![10, 20, 30]).unwrap();
        let t = normalize(&r);
        assert_eq!(t.data(), &[10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    }
}

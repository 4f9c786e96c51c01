//! Batches of images stored as `[N, H, W, C]` intensities in `[0, 1]`.

use std::path::Path;

use crate::error::{domain, Result};
use crate::nn::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major `(row, col, channel)` values.
    pub data: Vec<f32>,
}

impl Image {
    pub fn blank(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// 8-bit samples, rounding and clamping to `[0, 255]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Writes an 8-bit grayscale or RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => return Err(domain!("cannot write a {c}-channel image as PNG")),
        };
        image::save_buffer(path.as_ref(), &self.to_bytes(), self.width as u32, self.height as u32, color)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path.as_ref())?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img.color().channel_count() {
            1 | 2 => (1, img.into_luma8().into_raw()),
            _ => (3, img.into_rgb8().into_raw()),
        };
        Ok(Image {
            height,
            width,
            channels,
            data: bytes.into_iter().map(|b| b as f32 / 255.0).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ImageBatch {
    pub fn from_images(images: &[Image]) -> Self {
        assert!(!images.is_empty(), "empty image batch");
        let (height, width, channels) = (images[0].height, images[0].width, images[0].channels);
        let mut data = Vec::with_capacity(images.len() * height * width * channels);
        for im in images {
            assert_eq!((im.height, im.width, im.channels), (height, width, channels));
            data.extend_from_slice(&im.data);
        }
        ImageBatch {
            batch: images.len(),
            height,
            width,
            channels,
            data,
        }
    }

    pub fn image(&self, i: usize) -> Image {
        let n = self.height * self.width * self.channels;
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data[i * n..(i + 1) * n].to_vec(),
        }
    }

    pub fn images(&self) -> Vec<Image> {
        (0..self.batch).map(|i| self.image(i)).collect()
    }

    /// Channel-major `[C, N, H, W]` tensor for the networks.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (n, plane, c) = (self.batch, self.height * self.width, self.channels);
        let mut out = vec![T::zero(); self.data.len()];
        for ni in 0..n {
            for p in 0..plane {
                for ci in 0..c {
                    out[(ci * n + ni) * plane + p] = T::of(self.data[(ni * plane + p) * c + ci] as f64);
                }
            }
        }
        Tensor::from_vec(&[c, n, self.height, self.width], out)
    }

    /// Inverse of [`ImageBatch::to_tensor`], applying `f` to every element.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, f: impl Fn(f64) -> f64) -> Self {
        let (c, n, h, w) = (t.dim(0), t.dim(1), t.dim(2), t.dim(3));
        let plane = h * w;
        let mut data = vec![0.0f32; t.len()];
        for ci in 0..c {
            for ni in 0..n {
                for p in 0..plane {
                    data[(ni * plane + p) * c + ci] = f(t.data()[(ci * n + ni) * plane + p].f64()) as f32;
                }
            }
        }
        ImageBatch {
            batch: n,
            height: h,
            width: w,
            channels: c,
            data,
        }
    }
}

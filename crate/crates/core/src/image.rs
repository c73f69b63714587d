//! Planar `f32` images, `(C, H, W)` layout.

use crate::error::{Result, StssError};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(StssError::shape(
                "image",
                format!(
                    "{channels}x{height}x{width} needs {} values, got {}",
                    channels * height * width,
                    data.len()
                ),
            ));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Channels `[start, start + count)` as a new image.
    pub fn select(&self, start: usize, count: usize) -> Result<Image> {
        if start + count > self.channels {
            return Err(StssError::shape(
                "image select",
                format!("[{start}, {}) of {}", start + count, self.channels),
            ));
        }
        let n = self.height * self.width;
        Image::new(
            count,
            self.height,
            self.width,
            self.data[start * n..(start + count) * n].to_vec(),
        )
    }

    /// Channel-wise concatenation of equally sized images.
    pub fn concat(parts: &[&Image]) -> Result<Image> {
        let first = parts
            .first()
            .ok_or_else(|| StssError::shape("image concat", "nothing to concatenate"))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.dims() != first.dims() {
                return Err(StssError::shape(
                    "image concat",
                    format!("{:?} vs {:?}", first.dims(), p.dims()),
                ));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Image::new(channels, first.height, first.width, data)
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Image> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(StssError::shape(
                "crop",
                format!("{height}x{width} at ({y0},{x0}) exceeds {}x{}", self.height, self.width),
            ));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Image::new(self.channels, height, width, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, self.channels, self.height, self.width], self.data.clone())
            .expect("image extents are consistent")
    }

    /// Batch element `index` of an `(N, C, H, W)` tensor.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Image> {
        let (n, c, h, w) = t.dims4()?;
        if index >= n {
            return Err(StssError::shape(
                "image from tensor",
                format!("batch index {index} of {n}"),
            ));
        }
        let len = c * h * w;
        Image::new(c, h, w, t.data()[index * len..(index + 1) * len].to_vec())
    }

    /// 2× nearest-neighbour enlargement (used to lift LR masks to HR).
    pub fn upsample_nearest2(&self) -> Image {
        let (h, w) = (self.height * 2, self.width * 2);
        let mut out = Image::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.get(c, y / 2, x / 2));
                }
            }
        }
        out
    }
}

/// Non-overlapping box average by an integer `factor`.
pub fn downsample_box(image: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || image.height % factor != 0 || image.width % factor != 0 {
        return Err(StssError::shape(
            "downsample_box",
            format!("{}x{} not divisible by {factor}", image.height, image.width),
        ));
    }
    let (h, w) = (image.height / factor, image.width / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Image::zeros(image.channels, h, w);
    for c in 0..image.channels {
        for y in 0..h {
            for x in 0..w {
                // f64 accumulation keeps constant blocks exact.
                let mut acc = 0.0f64;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += image.get(c, y * factor + dy, x * factor + dx) as f64;
                    }
                }
                out.set(c, y, x, (acc * norm) as f32);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_mean_of_block() {
        let img = Image::new(1, 2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = downsample_box(&img, 2).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn box_preserves_constant() {
        let img = Image::filled(3, 8, 12, 0.37);
        let out = downsample_box(&img, 4).unwrap();
        assert_eq!(out.dims(), (2, 3));
        assert!(out.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn box_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..3 * 16 * 24).map(|_| rng.random::<f32>()).collect();
        let img = Image::new(3, 16, 24, data).unwrap();
        let out = downsample_box(&img, 2).unwrap();
        assert!((out.mean() - img.mean()).abs() < 1e-6);
    }

    #[test]
    fn box_rejects_indivisible() {
        assert!(downsample_box(&Image::zeros(1, 5, 4), 2).is_err());
    }

    #[test]
    fn crop_and_select() {
        let img = Image::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(img.crop(1, 1, 1, 2).unwrap().data(), &[4.0, 5.0, 10.0, 11.0]);
        assert_eq!(img.select(1, 1).unwrap().data(), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert!(img.crop(1, 2, 1, 2).is_err());
    }
}

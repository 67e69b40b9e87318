//! Single-channel float rasters and the filtering SIFT needs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f32>(width: usize, height: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Rescales values linearly onto `[0, 1]`; a constant image becomes all zeros.
    pub fn normalized(&self) -> GrayImage {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let data = if range > 0.0 && range.is_finite() {
            self.data.iter().map(|&v| (v - lo) / range).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        GrayImage { data, ..*self }
    }

    /// Separable Gaussian blur with edge replication.
    pub fn blur(&self, sigma: f32) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width as isize, self.height as isize);

        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            let row = &self.data[(y * w) as usize..((y + 1) * w) as usize];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = (x + k as isize - r).clamp(0, w - 1);
                    acc += kv * row[sx as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sy = (y + k as isize - r).clamp(0, h - 1);
                    acc += kv * tmp[(sy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    /// Keeps every second pixel along both axes.
    pub fn half(&self) -> GrayImage {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        GrayImage::from_fn(w, h, |x, y| self.at(2 * x, 2 * y))
    }

    pub fn sub(&self, other: &GrayImage) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Rotates 90° counter-clockwise.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        GrayImage::from_fn(h, w, |x, y| self.at(w - 1 - y, x))
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> GrayImage {
        GrayImage::from_fn(width, height, |x, y| self.at(x0 + x, y0 + y))
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as i32;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-((i * i) as f32) / denom).exp()).collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Central-difference gradient magnitude and orientation (radians, `atan2(dy, dx)`).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f32>,
    pub orientation: Vec<f32>,
}

impl Gradients {
    pub fn of(img: &GrayImage) -> Self {
        let (w, h) = (img.width, img.height);
        let mut magnitude = vec![0f32; w * h];
        let mut orientation = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let dx = img.at((x + 1).min(w - 1), y) - img.at(x.saturating_sub(1), y);
                let dy = img.at(x, (y + 1).min(h - 1)) - img.at(x, y.saturating_sub(1));
                magnitude[y * w + x] = (dx * dx + dy * dy).sqrt();
                orientation[y * w + x] = dy.atan2(dx);
            }
        }
        Self {
            width: w,
            height: h,
            magnitude,
            orientation,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.magnitude[i], self.orientation[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant_and_mass() {
        let c = GrayImage::from_fn(7, 5, |_, _| 3.0);
        assert!(c.blur(1.3).data().iter().all(|v| (v - 3.0).abs() < 1e-5));
        let mut spike = GrayImage::from_fn(21, 21, |_, _| 0.0);
        spike.data[10 * 21 + 10] = 1.0;
        let sum: f32 = spike.blur(1.0).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 7 + y) as f32);
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (3, 5));
        assert_eq!(r.rotate90().rotate90().rotate90(), img);
    }

    #[test]
    fn normalized_range() {
        let img = GrayImage::from_fn(3, 1, |x, _| 10.0 + 5.0 * x as f32);
        assert_eq!(img.normalized().data(), &[0.0, 0.5, 1.0]);
        let flat = GrayImage::from_fn(3, 1, |_, _| 4.0);
        assert_eq!(flat.normalized().data(), &[0.0; 3]);
    }
}

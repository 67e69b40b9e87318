//! Window refinement of projected matches using fixed-scale descriptors.

use super::gray::GrayImage;
use super::homography::Homography;
use super::sift::{descriptor_distance, DescriptorField};
use super::MatchConfig;
use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::rgb::RgbImage;

/// Descriptor scale used when comparing a cube pixel against window candidates.
pub const REFINE_SIGMA: f32 = 1.6;

/// Mean-over-bands proxy of a cube.
pub fn cube_proxy(cube: &SpectralCube) -> GrayImage {
    GrayImage::new(cube.width(), cube.height(), cube.mean_image()).expect("cube dimensions")
}

/// Luminance proxy of an RGB image.
pub fn rgb_proxy(rgb: &RgbImage) -> GrayImage {
    GrayImage::new(rgb.width(), rgb.height(), rgb.luminance()).expect("image dimensions")
}

/// Descriptor fields for both proxies, built once and shared across refinements.
pub struct Refiner {
    cube_field: DescriptorField,
    rgb_field: DescriptorField,
}

impl Refiner {
    pub fn new(cube: &SpectralCube, rgb: &RgbImage) -> Self {
        Self::from_proxies(&cube_proxy(cube), &rgb_proxy(rgb))
    }

    pub fn from_proxies(cube_proxy: &GrayImage, rgb_proxy: &GrayImage) -> Self {
        Self {
            cube_field: DescriptorField::new(cube_proxy, REFINE_SIGMA),
            rgb_field: DescriptorField::new(rgb_proxy, REFINE_SIGMA),
        }
    }

    /// Best-matching RGB pixel for cube pixel `(x, y)` inside the window around `H·(x, y)`.
    ///
    /// Candidates are ranked by descriptor distance, then by distance to the
    /// projected point, then in row-major order. The window is clipped to the
    /// image; a window entirely outside it is an error.
    pub fn refine(&self, h: &Homography, (x, y): (usize, usize), radius: usize) -> Result<(usize, usize)> {
        let (px, py) = h.apply(x as f64, y as f64);
        if !px.is_finite() || !py.is_finite() {
            return Err(Error::OutOfBounds { x: px, y: py });
        }
        let (w, hgt) = (self.rgb_field.width() as f64, self.rgb_field.height() as f64);
        let r = radius as f64;
        let (cx, cy) = (px.round(), py.round());
        let x0 = (cx - r).max(0.0);
        let x1 = (cx + r).min(w - 1.0);
        let y0 = (cy - r).max(0.0);
        let y1 = (cy + r).min(hgt - 1.0);
        if x0 > x1 || y0 > y1 {
            return Err(Error::OutOfBounds { x: px, y: py });
        }
        let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);

        let target = self.cube_field.describe(x, y);
        let mut best: Option<(f32, f64, (usize, usize))> = None;
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let d = descriptor_distance(&target, &self.rgb_field.describe(cx, cy));
                let prox = (cx as f64 - px).powi(2) + (cy as f64 - py).powi(2);
                let wins = match best {
                    None => true,
                    Some((bd, bp, _)) => d < bd || (d == bd && prox < bp),
                };
                if wins {
                    best = Some((d, prox, (cx, cy)));
                }
            }
        }
        Ok(best.expect("window is non-empty").2)
    }
}

/// One-off refinement of a single pixel; see [`Refiner::refine`].
pub fn refine_match(
    cube: &SpectralCube,
    rgb: &RgbImage,
    h: &Homography,
    pixel: (usize, usize),
    cfg: &MatchConfig,
) -> Result<(usize, usize)> {
    if pixel.0 >= cube.width() || pixel.1 >= cube.height() {
        return Err(Error::Invalid(format!(
            "pixel ({}, {}) outside the {}x{} cube",
            pixel.0,
            pixel.1,
            cube.width(),
            cube.height()
        )));
    }
    Refiner::new(cube, rgb).refine(h, pixel, cfg.window_radius)
}

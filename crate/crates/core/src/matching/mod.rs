//! Automatic control-point discovery between a cube and a reference RGB image.
//!
//! Coarse step: keypoints on every band and on the RGB luminance are matched
//! with a ratio test, pooled, and fed to a robust homography fit. Fine step: a
//! seeded random sample of cube pixels is projected through the homography and
//! each projection is refined inside a small window by descriptor distance.

pub mod gray;
pub mod homography;
pub mod refine;
pub mod sift;

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::points::{ControlPair, ControlPointSet};
use crate::rgb::RgbImage;

pub use gray::GrayImage;
pub use homography::{dlt, estimate_homography, Homography, HomographyEstimate, PointPair};
pub use refine::{cube_proxy, refine_match, rgb_proxy, Refiner};
pub use sift::{detect_keypoints, Descriptor, DescriptorField, Keypoint};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Half-size of the refinement window; 4 gives a 9×9 window.
    pub window_radius: usize,
    /// Fraction of cube pixels sampled as control-point candidates.
    pub sample_fraction: f64,
    /// Lowe ratio threshold for descriptor matches.
    pub ratio_threshold: f64,
    pub ransac_iterations: usize,
    /// Inlier reprojection tolerance in pixels.
    pub ransac_inlier_tol: f64,
    pub rng_seed: u64,
}

pub const DEFAULT_SEED: u64 = 0x5eed_cafe;

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            window_radius: 4,
            sample_fraction: 0.01,
            ratio_threshold: 0.8,
            ransac_iterations: 2000,
            ransac_inlier_tol: 3.0,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "sample fraction must be in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return Err(Error::Invalid(format!(
                "ratio threshold must be in (0, 1), got {}",
                self.ratio_threshold
            )));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::Invalid("ransac iterations must be at least 1".into()));
        }
        if !(self.ransac_inlier_tol > 0.0 && self.ransac_inlier_tol.is_finite()) {
            return Err(Error::Invalid(format!(
                "inlier tolerance must be > 0, got {}",
                self.ransac_inlier_tol
            )));
        }
        Ok(())
    }

    /// Number of pixels drawn from a `width × height` cube.
    pub fn sample_count(&self, width: usize, height: usize) -> usize {
        let total = width * height;
        ((self.sample_fraction * total as f64).ceil() as usize).clamp(1, total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorMatch {
    pub index_a: usize,
    pub index_b: usize,
    /// Distance to the nearest `b` descriptor.
    pub distance: f32,
    /// Nearest over second-nearest distance.
    pub ratio: f32,
}

/// Nearest-neighbor matches from `a` into `b` that pass the ratio test,
/// sorted by ascending distance (ties keep `a` order).
pub fn match_descriptors(a: &[Keypoint], b: &[Keypoint], cfg: &MatchConfig) -> Vec<DescriptorMatch> {
    if b.len() < 2 {
        return Vec::new();
    }
    let mut out: Vec<DescriptorMatch> = a
        .iter()
        .enumerate()
        .filter_map(|(ia, ka)| {
            let mut nearest = (f32::INFINITY, usize::MAX);
            let mut second = f32::INFINITY;
            for (ib, kb) in b.iter().enumerate() {
                let d = sift::descriptor_distance(&ka.descriptor, &kb.descriptor);
                if d < nearest.0 {
                    second = nearest.0;
                    nearest = (d, ib);
                } else if d < second {
                    second = d;
                }
            }
            let ratio = if second > 0.0 { nearest.0 / second } else { 1.0 };
            (ratio < cfg.ratio_threshold as f32).then_some(DescriptorMatch {
                index_a: ia,
                index_b: nearest.1,
                distance: nearest.0,
                ratio,
            })
        })
        .collect();
    out.sort_by(|x, y| x.distance.total_cmp(&y.distance));
    out
}

/// Everything the automatic matcher learned, for reports.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub points: ControlPointSet,
    pub homography: Homography,
    pub inliers: usize,
    /// Pooled keypoint matches fed to the homography fit.
    pub keypoint_matches: usize,
    pub sampled: usize,
    pub skipped_zero: usize,
    pub skipped_out_of_bounds: usize,
}

/// Keypoint matches pooled over all bands, strongest first, with near-duplicates
/// (both ends within 1 px of a kept match) removed.
pub fn pooled_matches(cube: &SpectralCube, rgb: &RgbImage, cfg: &MatchConfig) -> Result<Vec<PointPair>> {
    let rgb_kps = detect_keypoints(&rgb_proxy(rgb))?;
    let per_band: Vec<Vec<(f32, PointPair)>> = (0..cube.bands())
        .into_par_iter()
        .map(|band| -> Result<Vec<(f32, PointPair)>> {
            let img = GrayImage::new(cube.width(), cube.height(), cube.band_image(band))?;
            let kps = detect_keypoints(&img)?;
            Ok(match_descriptors(&kps, &rgb_kps, cfg)
                .into_iter()
                .map(|m| {
                    let (ka, kb) = (&kps[m.index_a], &rgb_kps[m.index_b]);
                    (
                        m.distance,
                        PointPair::new([ka.x as f64, ka.y as f64], [kb.x as f64, kb.y as f64]),
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut all: Vec<(f32, PointPair)> = per_band.into_iter().flatten().collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<PointPair> = Vec::new();
    let cell = |p: [f64; 2]| (p[0].floor() as i64, p[1].floor() as i64);
    for (_, pair) in all {
        let (gx, gy) = cell(pair.src);
        let duplicate = (gx - 1..=gx + 1).any(|cx| {
            (gy - 1..=gy + 1).any(|cy| {
                grid.get(&(cx, cy)).is_some_and(|ids| {
                    ids.iter().any(|&i| {
                        let k = &kept[i];
                        (k.src[0] - pair.src[0]).abs() <= 1.0
                            && (k.src[1] - pair.src[1]).abs() <= 1.0
                            && (k.dst[0] - pair.dst[0]).abs() <= 1.0
                            && (k.dst[1] - pair.dst[1]).abs() <= 1.0
                    })
                })
            })
        });
        if !duplicate {
            grid.entry((gx, gy)).or_default().push(kept.len());
            kept.push(pair);
        }
    }
    Ok(kept)
}

/// Seeded sample of distinct row-major pixel indices, ascending.
pub fn sample_pixels(width: usize, height: usize, cfg: &MatchConfig) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // Separate stream from the RANSAC sampler, which uses stream 0.
    rng.set_stream(1);
    let mut picked = index::sample(&mut rng, width * height, cfg.sample_count(width, height)).into_vec();
    picked.sort_unstable();
    picked
}

/// Emits control pairs for sampled pixels given an already estimated homography.
pub fn sample_control_points(
    cube: &SpectralCube,
    rgb: &RgbImage,
    h: &Homography,
    cfg: &MatchConfig,
) -> Result<(Vec<ControlPair>, usize, usize, usize)> {
    let refiner = Refiner::new(cube, rgb);
    let samples = sample_pixels(cube.width(), cube.height(), cfg);

    enum Outcome {
        Pair(ControlPair),
        Zero,
        OutOfBounds,
    }
    let outcomes: Vec<Outcome> = samples
        .par_iter()
        .map(|&idx| -> Result<Outcome> {
            let (x, y) = (idx % cube.width(), idx / cube.width());
            let sig = cube.signature(x, y);
            if sig.iter().all(|&v| v == 0.0) {
                return Ok(Outcome::Zero);
            }
            match refiner.refine(h, (x, y), cfg.window_radius) {
                Ok((rx, ry)) => Ok(Outcome::Pair(
                    ControlPair::new(sig.iter().map(|&v| v as f64).collect(), rgb.pixel(rx, ry))
                        .with_provenance([x, y], [rx, ry]),
                )),
                Err(Error::OutOfBounds { .. }) => Ok(Outcome::OutOfBounds),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    let (mut zero, mut oob) = (0, 0);
    for o in outcomes {
        match o {
            Outcome::Pair(p) => pairs.push(p),
            Outcome::Zero => zero += 1,
            Outcome::OutOfBounds => oob += 1,
        }
    }
    Ok((pairs, samples.len(), zero, oob))
}

/// Full coarse-to-fine matching pipeline.
pub fn build_control_points(cube: &SpectralCube, rgb: &RgbImage, cfg: &MatchConfig) -> Result<MatchOutcome> {
    cfg.validate()?;
    let pooled = pooled_matches(cube, rgb, cfg)?;
    let estimate = estimate_homography(&pooled, cfg)?;
    let (pairs, sampled, skipped_zero, skipped_out_of_bounds) =
        sample_control_points(cube, rgb, &estimate.homography, cfg)?;
    if pairs.is_empty() {
        return Err(Error::NoControlPoints);
    }
    Ok(MatchOutcome {
        points: ControlPointSet::new(cube.bands(), "", pairs)?,
        homography: estimate.homography,
        inliers: estimate.inliers.len(),
        keypoint_matches: pooled.len(),
        sampled,
        skipped_zero,
        skipped_out_of_bounds,
    })
}

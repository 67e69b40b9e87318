//! Difference-of-Gaussians keypoints with SIFT-style gradient histogram descriptors.
//!
//! Follows Lowe's construction: a Gaussian scale space with three scales per
//! octave, extrema of adjacent-scale differences refined by a quadratic fit,
//! low-contrast and edge responses discarded, one or more dominant gradient
//! orientations per point, and a 4×4×8 orientation histogram descriptor in the
//! rotated keypoint frame. The input is not upsampled.
//!
//! Coordinates are pixel centers with `x` to the right and `y` down; angles are
//! `atan2(dy, dx)` in that frame.

use std::f32::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::gray::{Gradients, GrayImage};
use crate::error::{Error, Result};

pub const DESCRIPTOR_LEN: usize = 128;
pub type Descriptor = [f32; DESCRIPTOR_LEN];

/// Smallest accepted side length for keypoint detection.
pub const MIN_IMAGE_SIZE: usize = 16;

const SCALES_PER_OCTAVE: usize = 3;
const MIN_OCTAVES: usize = 3;
const SIGMA0: f32 = 1.6;
const INPUT_BLUR: f32 = 0.5;
const CONTRAST_THRESHOLD: f32 = 0.04;
const EDGE_RATIO: f32 = 10.0;
const BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;

const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0;
const ORI_PEAK_RATIO: f32 = 0.8;

const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
/// Histogram cell width in units of the keypoint scale.
const DESC_CELL_FACTOR: f32 = 3.0;
const DESC_MAG_CLAMP: f32 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Gaussian scale in input pixels.
    pub scale: f32,
    pub orientation: f32,
    /// Interpolated DoG value at the extremum.
    pub response: f32,
    pub descriptor: Descriptor,
}

struct Octave {
    index: usize,
    gauss: Vec<GrayImage>,
    dog: Vec<GrayImage>,
    grads: Vec<Option<Gradients>>,
}

impl Octave {
    fn gradients(&mut self, layer: usize) -> &Gradients {
        let gauss = &self.gauss[layer];
        self.grads[layer].get_or_insert_with(|| Gradients::of(gauss))
    }
}

/// Detects keypoints on a single-channel image of any intensity range.
///
/// Intensities are rescaled to `[0, 1]` first, so thresholds are relative to
/// the image's own dynamic range. A constant image yields no keypoints.
pub fn detect_keypoints(image: &GrayImage) -> Result<Vec<Keypoint>> {
    let (w, h) = (image.width(), image.height());
    if w < MIN_IMAGE_SIZE || h < MIN_IMAGE_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_IMAGE_SIZE,
        });
    }
    let img = image.normalized();
    let n_octaves = ((w.min(h) as f32).log2().floor() as usize).saturating_sub(2).max(MIN_OCTAVES);

    let s = SCALES_PER_OCTAVE;
    let sigmas: Vec<f32> = (0..s + 3).map(|i| SIGMA0 * 2f32.powf(i as f32 / s as f32)).collect();
    let increments: Vec<f32> = (1..s + 3)
        .map(|i| (sigmas[i] * sigmas[i] - sigmas[i - 1] * sigmas[i - 1]).sqrt())
        .collect();

    let mut keypoints = Vec::new();
    let mut first = img.blur((SIGMA0 * SIGMA0 - INPUT_BLUR * INPUT_BLUR).sqrt());
    for o in 0..n_octaves {
        if o > 0 {
            if first.width() < 2 || first.height() < 2 {
                break;
            }
            first = first.half();
        }
        let mut gauss = vec![first.clone()];
        for inc in &increments {
            let next = gauss.last().unwrap().blur(*inc);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|p| p[1].sub(&p[0])).collect();
        let mut octave = Octave {
            index: o,
            grads: vec![None; gauss.len()],
            gauss,
            dog,
        };
        detect_in_octave(&mut octave, &mut keypoints);
        first = octave.gauss[s].clone();
    }
    Ok(keypoints)
}

fn detect_in_octave(oct: &mut Octave, out: &mut Vec<Keypoint>) {
    let s = SCALES_PER_OCTAVE;
    let (w, h) = (oct.dog[0].width(), oct.dog[0].height());
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return;
    }
    let pre_threshold = 0.5 * CONTRAST_THRESHOLD / s as f32;
    let mut found = Vec::new();
    for layer in 1..=s {
        for y in BORDER..h - BORDER {
            for x in BORDER..w - BORDER {
                let v = oct.dog[layer].at(x, y);
                if v.abs() <= pre_threshold || !is_extremum(&oct.dog, layer, x, y) {
                    continue;
                }
                if let Some(c) = localize(&oct.dog, layer, x, y) {
                    found.push(c);
                }
            }
        }
    }

    let scale_factor = (1usize << oct.index) as f32;
    for c in found {
        let sigma_oct = SIGMA0 * 2f32.powf((c.layer as f32 + c.ds) / s as f32);
        let grads = oct.gradients(c.layer);
        let px = c.x as f32 + c.dx;
        let py = c.y as f32 + c.dy;
        for angle in dominant_orientations(grads, px, py, sigma_oct) {
            if let Some(descriptor) = describe(grads, px, py, sigma_oct, angle) {
                out.push(Keypoint {
                    x: px * scale_factor,
                    y: py * scale_factor,
                    scale: sigma_oct * scale_factor,
                    orientation: angle,
                    response: c.response,
                    descriptor,
                });
            }
        }
    }
}

fn is_extremum(dog: &[GrayImage], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let is_max = v > 0.0;
    for img in &dog[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(img, &dog[layer]) && xx == x && yy == y {
                    continue;
                }
                let n = img.at(xx, yy);
                if (is_max && n >= v) || (!is_max && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

struct Candidate {
    x: usize,
    y: usize,
    layer: usize,
    dx: f32,
    dy: f32,
    ds: f32,
    response: f32,
}

fn localize(dog: &[GrayImage], layer: usize, x: usize, y: usize) -> Option<Candidate> {
    let s = SCALES_PER_OCTAVE;
    let (w, h) = (dog[0].width(), dog[0].height());
    let (mut x, mut y, mut layer) = (x, y, layer);
    for _ in 0..MAX_INTERP_STEPS {
        let d = |l: usize, xx: usize, yy: usize| dog[l].at(xx, yy);
        let v = d(layer, x, y);
        let g = Vector3::new(
            0.5 * (d(layer, x + 1, y) - d(layer, x - 1, y)),
            0.5 * (d(layer, x, y + 1) - d(layer, x, y - 1)),
            0.5 * (d(layer + 1, x, y) - d(layer - 1, x, y)),
        );
        let dxx = d(layer, x + 1, y) + d(layer, x - 1, y) - 2.0 * v;
        let dyy = d(layer, x, y + 1) + d(layer, x, y - 1) - 2.0 * v;
        let dss = d(layer + 1, x, y) + d(layer - 1, x, y) - 2.0 * v;
        let dxy = 0.25 * (d(layer, x + 1, y + 1) - d(layer, x - 1, y + 1) - d(layer, x + 1, y - 1) + d(layer, x - 1, y - 1));
        let dxs = 0.25 * (d(layer + 1, x + 1, y) - d(layer + 1, x - 1, y) - d(layer - 1, x + 1, y) + d(layer - 1, x - 1, y));
        let dys = 0.25 * (d(layer + 1, x, y + 1) - d(layer + 1, x, y - 1) - d(layer - 1, x, y + 1) + d(layer - 1, x, y - 1));
        let hess = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let offset = -(hess.try_inverse()? * g);

        if offset.iter().all(|o| o.abs() < 0.5) {
            let response = v + 0.5 * g.dot(&offset);
            if response.abs() * (s as f32) < CONTRAST_THRESHOLD {
                return None;
            }
            let trace = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            if det <= 0.0 || trace * trace * EDGE_RATIO >= (EDGE_RATIO + 1.0).powi(2) * det {
                return None;
            }
            return Some(Candidate {
                x,
                y,
                layer,
                dx: offset[0],
                dy: offset[1],
                ds: offset[2],
                response,
            });
        }
        if offset.iter().any(|o| o.abs() > 1e4) {
            return None;
        }
        let nx = x as i64 + offset[0].round() as i64;
        let ny = y as i64 + offset[1].round() as i64;
        let nl = layer as i64 + offset[2].round() as i64;
        if nl < 1 || nl > s as i64 || nx < BORDER as i64 || ny < BORDER as i64 || nx >= (w - BORDER) as i64 || ny >= (h - BORDER) as i64
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

fn wrap_angle(a: f32) -> f32 {
    let two_pi = 2.0 * PI;
    let r = a.rem_euclid(two_pi);
    if r >= two_pi {
        0.0
    } else {
        r
    }
}

fn dominant_orientations(grads: &Gradients, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let (w, h) = (grads.width as i64, grads.height as i64);
    let weight_sigma = ORI_SIGMA_FACTOR * sigma;
    let radius = (ORI_RADIUS_FACTOR * weight_sigma).round() as i64;
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let denom = 2.0 * weight_sigma * weight_sigma;

    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let py = cy + dy;
        if py <= 0 || py >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px <= 0 || px >= w - 1 {
                continue;
            }
            let (mag, ori) = grads.get(px as usize, py as usize);
            let weight = (-((dx * dx + dy * dy) as f32) / denom).exp();
            let bin = ((ORI_BINS as f32) * wrap_angle(ori) / (2.0 * PI)).round() as usize % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }

    let n = ORI_BINS;
    let smooth: Vec<f32> = (0..n)
        .map(|i| {
            let at = |o: isize| hist[((i as isize + o).rem_euclid(n as isize)) as usize];
            (at(-2) + at(2)) / 16.0 + 4.0 * (at(-1) + at(1)) / 16.0 + 6.0 * at(0) / 16.0
        })
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut angles = Vec::new();
    for i in 0..n {
        let l = smooth[(i + n - 1) % n];
        let r = smooth[(i + 1) % n];
        let c = smooth[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let bin = i as f32 + 0.5 * (l - r) / (l - 2.0 * c + r);
            angles.push(wrap_angle(2.0 * PI * bin / n as f32));
        }
    }
    angles
}

/// One sample of a descriptor patch: spatial weight and trilinear cell coordinates.
#[derive(Debug, Clone, Copy)]
struct Sample {
    dx: i32,
    dy: i32,
    row: f32,
    col: f32,
    weight: f32,
}

fn patch_radius(sigma: f32) -> i32 {
    let cell = DESC_CELL_FACTOR * sigma;
    (cell * std::f32::consts::SQRT_2 * (DESC_WIDTH as f32 + 1.0) * 0.5).round() as i32
}

/// Rotated-frame cell coordinates of a sample at offset `(ox, oy)` from the keypoint.
fn sample_at(ox: f32, oy: f32, sigma: f32, cos_a: f32, sin_a: f32) -> Option<(f32, f32, f32)> {
    let cell = DESC_CELL_FACTOR * sigma;
    let u = (cos_a * ox + sin_a * oy) / cell;
    let v = (-sin_a * ox + cos_a * oy) / cell;
    let half = DESC_WIDTH as f32 / 2.0;
    let col = u + half - 0.5;
    let row = v + half - 0.5;
    if row <= -1.0 || row >= DESC_WIDTH as f32 || col <= -1.0 || col >= DESC_WIDTH as f32 {
        return None;
    }
    let weight = (-(u * u + v * v) / (2.0 * half * half)).exp();
    Some((row, col, weight))
}

fn accumulate(hist: &mut Descriptor, row: f32, col: f32, obin: f32, mag: f32) {
    let (r0, c0, o0) = (row.floor(), col.floor(), obin.floor());
    let (fr, fc, fo) = (row - r0, col - c0, obin - o0);
    let (r0, c0, o0) = (r0 as i32, c0 as i32, o0 as i32);
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        let r = r0 + dr;
        if r < 0 || r >= DESC_WIDTH as i32 {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let c = c0 + dc;
            if c < 0 || c >= DESC_WIDTH as i32 {
                continue;
            }
            for (dor, wo) in [(0, 1.0 - fo), (1, fo)] {
                let o = (o0 + dor).rem_euclid(DESC_BINS as i32);
                let idx = (r as usize * DESC_WIDTH + c as usize) * DESC_BINS + o as usize;
                hist[idx] += mag * wr * wc * wo;
            }
        }
    }
}

/// L2-normalizes, clamps large components, renormalizes. `None` for an empty histogram.
fn finish(mut hist: Descriptor) -> Option<Descriptor> {
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm <= f32::EPSILON {
        return None;
    }
    let limit = DESC_MAG_CLAMP * norm;
    hist.iter_mut().for_each(|v| *v = v.min(limit));
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    hist.iter_mut().for_each(|v| *v /= norm);
    Some(hist)
}

fn orientation_bin(ori: f32, angle: f32) -> f32 {
    wrap_angle(ori - angle) * DESC_BINS as f32 / (2.0 * PI)
}

fn describe(grads: &Gradients, x: f32, y: f32, sigma: f32, angle: f32) -> Option<Descriptor> {
    let (w, h) = (grads.width as i64, grads.height as i64);
    let radius = patch_radius(sigma) as i64;
    let (cos_a, sin_a) = (angle.cos(), angle.sin());
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = [0f32; DESCRIPTOR_LEN];
    for dy in -radius..=radius {
        let py = cy + dy;
        if py <= 0 || py >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px <= 0 || px >= w - 1 {
                continue;
            }
            let Some((row, col, weight)) = sample_at(px as f32 - x, py as f32 - y, sigma, cos_a, sin_a) else {
                continue;
            };
            let (mag, ori) = grads.get(px as usize, py as usize);
            accumulate(&mut hist, row, col, orientation_bin(ori, angle), mag * weight);
        }
    }
    finish(hist)
}

/// Upright descriptors at a fixed scale, computable at any integer pixel.
///
/// Used for dense window searches where every candidate position must be
/// described the same way.
#[derive(Debug, Clone)]
pub struct DescriptorField {
    grads: Gradients,
    stencil: Vec<Sample>,
}

impl DescriptorField {
    pub fn new(image: &GrayImage, sigma: f32) -> Self {
        let grads = Gradients::of(&image.blur(sigma));
        let radius = patch_radius(sigma);
        let mut stencil = Vec::new();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if let Some((row, col, weight)) = sample_at(dx as f32, dy as f32, sigma, 1.0, 0.0) {
                    stencil.push(Sample { dx, dy, row, col, weight });
                }
            }
        }
        Self { grads, stencil }
    }

    pub fn width(&self) -> usize {
        self.grads.width
    }

    pub fn height(&self) -> usize {
        self.grads.height
    }

    /// Descriptor centered on pixel `(x, y)`; all zeros over a featureless patch.
    pub fn describe(&self, x: usize, y: usize) -> Descriptor {
        let (w, h) = (self.grads.width as i32, self.grads.height as i32);
        let mut hist = [0f32; DESCRIPTOR_LEN];
        for s in &self.stencil {
            let px = x as i32 + s.dx;
            let py = y as i32 + s.dy;
            if px <= 0 || py <= 0 || px >= w - 1 || py >= h - 1 {
                continue;
            }
            let (mag, ori) = self.grads.get(px as usize, py as usize);
            accumulate(&mut hist, s.row, s.col, orientation_bin(ori, 0.0), mag * s.weight);
        }
        finish(hist).unwrap_or([0.0; DESCRIPTOR_LEN])
    }
}

pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(w: usize, h: usize) -> GrayImage {
        let centers = [(12.0, 14.0, 3.0), (40.0, 20.0, 4.5), (25.0, 45.0, 2.5), (50.0, 50.0, 3.5)];
        GrayImage::from_fn(w, h, |x, y| {
            centers
                .iter()
                .map(|&(cx, cy, s)| {
                    let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                    (-d2 / (2.0 * s * s)).exp()
                })
                .sum()
        })
    }

    #[test]
    fn too_small() {
        let img = GrayImage::from_fn(15, 40, |_, _| 0.0);
        assert!(matches!(detect_keypoints(&img), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = GrayImage::from_fn(64, 48, |_, _| 0.7);
        assert!(detect_keypoints(&img).unwrap().is_empty());
    }

    #[test]
    fn blobs_are_found_with_unit_descriptors() {
        let kps = detect_keypoints(&blobs(64, 64)).unwrap();
        assert!(!kps.is_empty());
        for kp in &kps {
            let n = kp.descriptor.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((0.99..=1.01).contains(&n));
            assert!(kp.descriptor.iter().all(|&v| v >= 0.0));
            assert!(kp.scale > 0.0);
        }
        // Each blob center should be near some keypoint.
        for (cx, cy) in [(12.0, 14.0), (40.0, 20.0), (25.0, 45.0), (50.0, 50.0)] {
            assert!(kps.iter().any(|k| (k.x - cx).abs() < 2.0 && (k.y - cy).abs() < 2.0), "no keypoint near ({cx}, {cy})");
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let img = blobs(64, 64);
        assert_eq!(detect_keypoints(&img).unwrap(), detect_keypoints(&img).unwrap());
    }

    #[test]
    fn field_descriptor_of_flat_patch_is_zero() {
        let field = DescriptorField::new(&GrayImage::from_fn(32, 32, |_, _| 1.0), 1.6);
        assert!(field.describe(16, 16).iter().all(|&v| v == 0.0));
    }
}

//! Deterministic synthetic scenes for tests, benchmarks and demos.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::mls::AffineColorMap;
use crate::matching::{sample_pixels, MatchConfig};
use crate::points::{ControlPair, ControlPointSet};
use crate::rgb::RgbImage;

/// A smooth background overlaid with `blobs` soft, randomly colored discs.
///
/// The result has plenty of blob-like structure for keypoint detection and a
/// wide spread of colors.
pub fn blob_texture(width: usize, height: usize, blobs: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spots: Vec<([f64; 2], f64, [f64; 3])> = (0..blobs)
        .map(|_| {
            let c = [rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64)];
            let sigma = rng.random_range(1.5..5.0);
            let color = [
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
            ];
            (c, sigma, color)
        })
        .collect();
    let (w, h) = (width as f64, height as f64);
    RgbImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64 / w, y as f64 / h);
        let mut acc = [60.0 + 120.0 * fx, 80.0 + 90.0 * fy, 140.0 - 80.0 * fx * fy];
        let mut total = 1.0;
        for (c, sigma, color) in &spots {
            let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
            let wt = 6.0 * (-d2 / (2.0 * sigma * sigma)).exp();
            if wt > 1e-6 {
                for ch in 0..3 {
                    acc[ch] += wt * color[ch];
                }
                total += wt;
            }
        }
        acc.map(|v| (v / total).round().clamp(0.0, 255.0) as u8)
    })
    .expect("nonempty dimensions")
}

/// Fixed nonlinear map from an RGB color to a `bands`-long signature.
///
/// The color is expanded into [`LIFT_FEATURES`] nonlinear features (power
/// laws and channel products), which are mixed into the bands by Gaussian
/// sensitivity curves. With `bands == LIFT_FEATURES` the signatures span the
/// full band space. The offset keeps every signature strictly positive.
pub fn lift_color(color: [u8; 3], bands: usize) -> Vec<f32> {
    let [r, g, b] = color.map(|c| c as f64 / 255.0);
    let features = [
        r.powf(2.2),
        g.powf(1.6),
        b.powf(2.8),
        r * g,
        g * b,
        (r * b).sqrt(),
        g.powf(3.0),
        (r + b).powi(2) / 4.0,
    ];
    (0..bands)
        .map(|band| {
            let lambda = if bands == 1 { 0.5 } else { band as f64 / (bands - 1) as f64 };
            let mut s = 20.0;
            for (j, f) in features.iter().enumerate() {
                let center = j as f64 / (LIFT_FEATURES - 1) as f64;
                s += 600.0 * (-(lambda - center).powi(2) / (2.0 * 0.15 * 0.15)).exp() * f;
            }
            s as f32
        })
        .collect()
}

/// Number of nonlinear color features behind [`lift_color`].
pub const LIFT_FEATURES: usize = 8;

/// Cube whose every pixel is [`lift_color`] of the corresponding RGB pixel.
pub fn spectral_lift(rgb: &RgbImage, bands: usize) -> SpectralCube {
    let mut values = Vec::with_capacity(rgb.pixel_count() * bands);
    for px in rgb.pixels() {
        values.extend(lift_color(px, bands));
    }
    SpectralCube::new(rgb.width(), rgb.height(), bands, values).expect("lift yields valid signatures")
}

/// Control pairs for a cube and an RGB image that are already pixel-aligned,
/// taken at the seeded sample positions of `cfg`.
pub fn aligned_pairs(cube: &SpectralCube, rgb: &RgbImage, cfg: &MatchConfig) -> Result<ControlPointSet> {
    if (cube.width(), cube.height()) != (rgb.width(), rgb.height()) {
        return Err(Error::DimensionMismatch(format!(
            "cube is {}x{}, image is {}x{}",
            cube.width(),
            cube.height(),
            rgb.width(),
            rgb.height()
        )));
    }
    let w = cube.width();
    let pairs = sample_pixels(w, cube.height(), cfg)
        .into_iter()
        .map(|i| (i % w, i / w))
        .filter(|&(x, y)| cube.signature(x, y).iter().any(|&v| v != 0.0))
        .map(|(x, y)| {
            ControlPair::new(cube.signature(x, y).iter().map(|&v| v as f64).collect(), rgb.pixel(x, y))
                .with_provenance([x, y], [x, y])
        })
        .collect();
    ControlPointSet::new(cube.bands(), "", pairs)
}

/// Best single affine map over all pairs by unweighted least squares.
pub fn global_affine_fit(set: &ControlPointSet) -> Result<AffineColorMap> {
    let (p, n) = (set.bands(), set.len());
    let mut a = DMatrix::<f64>::zeros(n, p + 1);
    let mut b = DMatrix::<f64>::zeros(n, 3);
    for (k, pair) in set.iter().enumerate() {
        for (j, &u) in pair.u.iter().enumerate() {
            a[(k, j)] = u;
        }
        a[(k, p)] = 1.0;
        for (c, &v) in pair.v.iter().enumerate() {
            b[(k, c)] = v as f64;
        }
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Invalid(format!("least squares failed: {e}")))?;
    let linear = sol.rows(0, p).into_owned();
    let translation = Vector3::new(sol[(p, 0)], sol[(p, 1)], sol[(p, 2)]);
    AffineColorMap::new(linear, translation)
}

/// Renders `cube` with a single affine map, clamped like the MLS output.
pub fn render_affine(cube: &SpectralCube, map: &AffineColorMap) -> Result<RgbImage> {
    let mut data = Vec::with_capacity(cube.pixel_count() * 3);
    let mut x = vec![0f64; cube.bands()];
    for sig in cube.signatures() {
        for (d, &s) in x.iter_mut().zip(sig) {
            *d = s as f64;
        }
        data.extend(map.apply(&x)?.map(|v| v.round() as u8));
    }
    RgbImage::new(cube.width(), cube.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_seeded() {
        let a = blob_texture(32, 24, 10, 3);
        assert_eq!(a, blob_texture(32, 24, 10, 3));
        assert_ne!(a, blob_texture(32, 24, 10, 4));
    }

    #[test]
    fn lift_is_positive_and_sized() {
        for color in [[0, 0, 0], [255, 255, 255], [12, 200, 99]] {
            let s = lift_color(color, 16);
            assert_eq!(s.len(), 16);
            assert!(s.iter().all(|&v| v >= 20.0));
        }
    }

    #[test]
    fn global_fit_recovers_exact_affine() {
        let pairs = (0..6)
            .map(|k| {
                let u = vec![1.0 + k as f64, 2.0 + (k * k) as f64];
                let v = [
                    (3.0 * u[0] + 2.0) as u8,
                    (u[1] + 1.0) as u8,
                    (2.0 * u[0] + u[1]) as u8,
                ];
                ControlPair::new(u, v)
            })
            .collect();
        let set = ControlPointSet::new(2, "", pairs).unwrap();
        let map = global_affine_fit(&set).unwrap();
        let y = map.apply_unclamped(&[4.0, 10.0]).unwrap();
        for (got, want) in y.iter().zip([14.0, 11.0, 18.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}

//! Planar homographies: normalized DLT and a seeded RANSAC wrapper.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MatchConfig;
use crate::error::{Error, Result};
use crate::rgb::RgbImage;

/// A 3×3 projective transform scaled so that `H[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Homography("non-finite entries".into()));
        }
        let scale = m[(2, 2)];
        if scale.abs() < 1e-12 * m.abs().max() {
            return Err(Error::Homography("H[2][2] is zero; cannot normalize".into()));
        }
        let m = m / scale;
        let det = m.determinant();
        if !det.is_finite() || det.abs() < 1e-14 {
            return Err(Error::Homography("singular matrix".into()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.0[(r, c)]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a point; the result is non-finite for points sent to infinity.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p[0] / p[2], p[1] / p[2])
    }

    pub fn inverse(&self) -> Self {
        // det != 0 is a construction invariant.
        Self::new(self.0.try_inverse().expect("homography is invertible")).expect("inverse is a homography")
    }

    pub fn compose(&self, then: &Homography) -> Result<Self> {
        Self::new(then.0 * self.0)
    }

    /// Samples `source` at `H·(x, y)` (nearest pixel) for every pixel of a
    /// `width × height` frame. The mask marks pixels that landed inside `source`.
    pub fn warp_image(&self, source: &RgbImage, width: usize, height: usize) -> (RgbImage, Vec<bool>) {
        let mut out = RgbImage::filled(width, height, [0, 0, 0]).expect("positive dimensions");
        let mut mask = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = self.apply(x as f64, y as f64);
                let (rx, ry) = (sx.round(), sy.round());
                if rx >= 0.0 && ry >= 0.0 && rx < source.width() as f64 && ry < source.height() as f64 {
                    out.set_pixel(x, y, source.pixel(rx as usize, ry as usize));
                    mask[y * width + x] = true;
                }
            }
        }
        (out, mask)
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Homography::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// A point in the source image and its counterpart in the target image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

impl PointPair {
    pub fn new(src: [f64; 2], dst: [f64; 2]) -> Self {
        Self { src, dst }
    }
}

pub fn reprojection_error(h: &Homography, pair: &PointPair) -> f64 {
    let (x, y) = h.apply(pair.src[0], pair.src[1]);
    let e = ((x - pair.dst[0]).powi(2) + (y - pair.dst[1]).powi(2)).sqrt();
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

/// Similarity taking points to zero mean and mean distance √2.
fn normalizing_transform(points: impl Iterator<Item = [f64; 2]> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, my) = (sx / n, sy / n);
    let mean_dist = points.map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_dist.is_nan() || mean_dist <= 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

/// Direct linear transform with Hartley normalization over all given pairs.
pub fn dlt(pairs: &[PointPair]) -> Result<Homography> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::Homography(format!("need at least 4 correspondences, got {n}")));
    }
    let t_src = normalizing_transform(pairs.iter().map(|p| p.src))
        .ok_or_else(|| Error::Homography("degenerate source points".into()))?;
    let t_dst = normalizing_transform(pairs.iter().map(|p| p.dst))
        .ok_or_else(|| Error::Homography("degenerate target points".into()))?;

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, p) in pairs.iter().enumerate() {
        let s = t_src * Vector3::new(p.src[0], p.src[1], 1.0);
        let d = t_dst * Vector3::new(p.dst[0], p.dst[1], 1.0);
        let (x, y) = (s[0], s[1]);
        let (u, v) = (d[0], d[1]);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Homography("svd failed".into()))?;
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let h = v_t.row(smallest);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Homography("normalization not invertible".into()))?;
    Homography::new(t_dst_inv * hn * t_src)
}

/// Result of robust estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct HomographyEstimate {
    pub homography: Homography,
    /// Indices of pairs within the inlier tolerance, ascending.
    pub inliers: Vec<usize>,
    pub mean_inlier_error: f64,
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2))
        .max((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2));
    area.abs() <= 1e-9 * scale.max(1e-300)
}

fn degenerate_sample(pairs: &[PointPair], sample: &[usize]) -> bool {
    for skip in 0..4 {
        let tri: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| sample[i]).collect();
        let (a, b, c) = (pairs[tri[0]], pairs[tri[1]], pairs[tri[2]]);
        if collinear(a.src, b.src, c.src) || collinear(a.dst, b.dst, c.dst) {
            return true;
        }
    }
    false
}

fn score(h: &Homography, pairs: &[PointPair], tol: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let e = reprojection_error(h, p);
        if e < tol {
            inliers.push(i);
            total += e;
        }
    }
    let mean = if inliers.is_empty() {
        f64::INFINITY
    } else {
        total / inliers.len() as f64
    };
    (inliers, mean)
}

fn better(count: usize, mean: f64, best: &Option<HomographyEstimate>) -> bool {
    match best {
        None => count >= 4,
        Some(b) => count > b.inliers.len() || (count == b.inliers.len() && mean < b.mean_inlier_error),
    }
}

/// RANSAC over minimal four-point DLT solves, then one DLT re-fit on the inlier set.
///
/// The model with the most inliers wins; ties go to the lower mean inlier
/// reprojection error. Sampling is driven by `cfg.rng_seed`.
pub fn estimate_homography(pairs: &[PointPair], cfg: &MatchConfig) -> Result<HomographyEstimate> {
    if pairs.len() < 4 {
        return Err(Error::Homography(format!(
            "need at least 4 correspondences, got {}",
            pairs.len()
        )));
    }
    let tol = cfg.ransac_inlier_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<HomographyEstimate> = None;

    let exhaustive = pairs.len() == 4;
    for _ in 0..cfg.ransac_iterations {
        let sample: Vec<usize> = if exhaustive {
            vec![0, 1, 2, 3]
        } else {
            index::sample(&mut rng, pairs.len(), 4).into_vec()
        };
        if !degenerate_sample(pairs, &sample) {
            let minimal: Vec<PointPair> = sample.iter().map(|&i| pairs[i]).collect();
            if let Ok(h) = dlt(&minimal) {
                let (inliers, mean) = score(&h, pairs, tol);
                if better(inliers.len(), mean, &best) {
                    best = Some(HomographyEstimate {
                        homography: h,
                        inliers,
                        mean_inlier_error: mean,
                    });
                }
            }
        }
        if exhaustive || best.as_ref().is_some_and(|b| b.inliers.len() == pairs.len()) {
            break;
        }
    }

    let mut best = best.ok_or_else(|| Error::Homography("no non-degenerate model found".into()))?;

    let subset: Vec<PointPair> = best.inliers.iter().map(|&i| pairs[i]).collect();
    if let Ok(h) = dlt(&subset) {
        let (inliers, mean) = score(&h, pairs, tol);
        if inliers.len() >= best.inliers.len() {
            best = HomographyEstimate {
                homography: h,
                inliers,
                mean_inlier_error: mean,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]
    }

    #[test]
    fn identity_from_fixed_points() {
        let pairs: Vec<PointPair> = square().into_iter().map(|p| PointPair::new(p, p)).collect();
        let est = estimate_homography(&pairs, &MatchConfig::default()).unwrap();
        let m = est.homography.matrix();
        assert!((m - Matrix3::identity()).abs().max() < 1e-9);
        assert_eq!(m[(2, 2)], 1.0);
    }

    #[test]
    fn pure_translation() {
        let pairs: Vec<PointPair> = square()
            .into_iter()
            .chain([[3.0, 7.0], [5.0, 2.0]])
            .map(|p| PointPair::new(p, [p[0] + 4.5, p[1] - 2.25]))
            .collect();
        let est = estimate_homography(&pairs, &MatchConfig::default()).unwrap();
        let expected = Homography::translation(4.5, -2.25);
        assert!((est.homography.matrix() - expected.matrix()).abs().max() < 1e-9);
        for p in &pairs {
            assert!(reprojection_error(&est.homography, p) < 1e-6);
        }
    }

    #[test]
    fn too_few_pairs() {
        let pairs: Vec<PointPair> = square()[..3].iter().map(|&p| PointPair::new(p, p)).collect();
        assert!(matches!(estimate_homography(&pairs, &MatchConfig::default()), Err(Error::Homography(_))));
    }

    #[test]
    fn collinear_points_exhaust_ransac() {
        let pairs: Vec<PointPair> = (0..6).map(|i| PointPair::new([i as f64, 2.0 * i as f64], [i as f64, i as f64])).collect();
        assert!(estimate_homography(&pairs, &MatchConfig::default()).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let h = Homography::from_rows([[1.1, 0.05, 3.0], [-0.02, 0.95, -7.0], [1e-4, -2e-4, 1.0]]).unwrap();
        let inv = h.inverse();
        assert_eq!(inv.matrix()[(2, 2)], 1.0);
        for (x, y) in [(0.0, 0.0), (120.5, 33.25), (-40.0, 500.0)] {
            let (u, v) = h.apply(x, y);
            let (bx, by) = inv.apply(u, v);
            assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_singular() {
        assert!(Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn serde_as_rows() {
        let h = Homography::translation(2.0, 3.0);
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, "[[1.0,0.0,2.0],[0.0,1.0,3.0],[0.0,0.0,1.0]]");
        assert_eq!(serde_json::from_str::<Homography>(&text).unwrap(), h);
    }

    #[test]
    fn warp_translation() {
        let src = RgbImage::from_fn(4, 3, |x, y| [x as u8, y as u8, 9]).unwrap();
        let (out, mask) = Homography::translation(1.0, 0.0).warp_image(&src, 4, 3);
        assert_eq!(out.pixel(0, 2), [1, 2, 9]);
        assert!(!mask[3]);
        assert!(mask[2]);
    }
}

//! Entropy and RMSE for judging a visualization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rgb::RgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub entropy_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub pixel_count: usize,
}

/// Shannon entropy (bits) of the 256-bin luminance histogram.
pub fn entropy(image: &RgbImage) -> f64 {
    let mut hist = [0u64; 256];
    for level in image.luminance_levels() {
        hist[level as usize] += 1;
    }
    let total = image.pixel_count() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        // -0.0 for a single occupied bin
        .abs()
}

/// Root mean square channel difference, in 8-bit levels.
pub fn rmse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    rmse_masked(a, b, None)
}

/// RMSE restricted to pixels whose mask entry is true.
pub fn rmse_masked(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(Error::LengthMismatch {
                expected: a.pixel_count(),
                got: m.len(),
            });
        }
    }
    let mut sum = 0u64;
    let mut count = 0u64;
    for (i, (pa, pb)) in a.pixels().zip(b.pixels()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for c in 0..3 {
            let d = pa[c] as i64 - pb[c] as i64;
            sum += (d * d) as u64;
        }
        count += 3;
    }
    if count == 0 {
        return Err(Error::Invalid("no overlapping pixels to compare".into()));
    }
    Ok((sum as f64 / count as f64).sqrt())
}

pub fn evaluate(image: &RgbImage, reference: Option<&RgbImage>) -> Result<MetricReport> {
    Ok(MetricReport {
        entropy_bits: entropy(image),
        rmse: reference.map(|r| rmse(image, r)).transpose()?,
        pixel_count: image.pixel_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(levels: &[u8], width: usize) -> RgbImage {
        RgbImage::from_fn(width, levels.len() / width, |x, y| {
            let v = levels[y * width + x];
            [v, v, v]
        })
        .unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&RgbImage::filled(4, 4, [9, 80, 200]).unwrap()), 0.0);
        let all: Vec<u8> = (0..=255).collect();
        assert_eq!(entropy(&gray(&all, 16)), 8.0);
        assert_eq!(entropy(&gray(&[0, 255, 0, 255], 2)), 1.0);
    }

    #[test]
    fn rmse_examples() {
        let a = RgbImage::from_fn(3, 2, |x, y| [x as u8 * 10, y as u8 * 20, 100]).unwrap();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = RgbImage::from_fn(3, 2, |x, y| [x as u8 * 10 + 10, y as u8 * 20 + 10, 110]).unwrap();
        assert_eq!(rmse(&a, &b).unwrap(), 10.0);
        let black = RgbImage::filled(2, 2, [0, 0, 0]).unwrap();
        let white = RgbImage::filled(2, 2, [255, 255, 255]).unwrap();
        assert_eq!(rmse(&black, &white).unwrap(), 255.0);
        let small = RgbImage::filled(1, 2, [0, 0, 0]).unwrap();
        assert!(matches!(rmse(&black, &small), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn masked_rmse_skips_pixels() {
        let a = RgbImage::new(2, 1, vec![0, 0, 0, 0, 0, 0]).unwrap();
        let b = RgbImage::new(2, 1, vec![3, 3, 3, 200, 200, 200]).unwrap();
        assert_eq!(rmse_masked(&a, &b, Some(&[true, false])).unwrap(), 3.0);
        assert!(rmse_masked(&a, &b, Some(&[false, false])).is_err());
    }

    fn image_strategy() -> impl Strategy<Value = (usize, Vec<u8>)> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| (Just(w), prop::collection::vec(any::<u8>(), w * h * 3)))
    }

    proptest! {
        #[test]
        fn entropy_ignores_pixel_order((w, data) in image_strategy(), rot in 0usize..100) {
            let img = RgbImage::new(w, data.len() / 3 / w, data.clone()).unwrap();
            let mut px: Vec<[u8; 3]> = img.pixels().collect();
            let k = rot % px.len();
            px.rotate_left(k);
            px.reverse();
            let shuffled = RgbImage::new(w, data.len() / 3 / w, px.concat()).unwrap();
            let e = entropy(&img);
            prop_assert!((e - entropy(&shuffled)).abs() < 1e-12);
            prop_assert!((0.0..=8.0).contains(&e));
        }

        #[test]
        fn rmse_is_a_metric(
            (w, a) in image_strategy(),
            seed_b in prop::collection::vec(any::<u8>(), 75),
            seed_c in prop::collection::vec(any::<u8>(), 75),
        ) {
            let h = a.len() / 3 / w;
            let n = a.len();
            let ia = RgbImage::new(w, h, a).unwrap();
            let ib = RgbImage::new(w, h, seed_b[..n].to_vec()).unwrap();
            let ic = RgbImage::new(w, h, seed_c[..n].to_vec()).unwrap();
            let ab = rmse(&ia, &ib).unwrap();
            prop_assert_eq!(ab, rmse(&ib, &ia).unwrap());
            prop_assert_eq!(rmse(&ia, &ia).unwrap(), 0.0);
            prop_assert!(ab <= rmse(&ia, &ic).unwrap() + rmse(&ic, &ib).unwrap() + 1e-9);
            prop_assert!((0.0..=255.0).contains(&ab));
        }
    }
}

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use super::{mean_color, MlsConfig, Solver, Workspace};
use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::points::ControlPointSet;
use crate::rgb::RgbImage;

/// Signature compared and hashed by bit pattern.
#[derive(Clone, Copy)]
struct SigKey<'a>(&'a [f32]);

impl PartialEq for SigKey<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for SigKey<'_> {}

impl Hash for SigKey<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in self.0 {
            state.write_u32(v.to_bits());
        }
    }
}

fn to_level(v: f64) -> u8 {
    super::clamp_channel(v).round() as u8
}

/// Maps every cube pixel through its own moving least squares solve.
///
/// Work is split across the current rayon pool; each output pixel depends only
/// on its own signature, so the result is identical for any thread count.
pub fn render(cube: &SpectralCube, set: &ControlPointSet, cfg: &MlsConfig) -> Result<RgbImage> {
    cfg.validate()?;
    if cube.bands() != set.bands() {
        return Err(Error::BandMismatch {
            cube: cube.bands(),
            points: set.bands(),
        });
    }

    // Row-major pixel index of the first occurrence of each distinct signature,
    // and for every pixel the slot of its signature in that list.
    let (unique, slot_of): (Vec<usize>, Vec<usize>) = if cfg.dedup {
        let mut first = HashMap::<SigKey<'_>, usize>::new();
        let mut unique = Vec::new();
        let slots = cube
            .signatures()
            .enumerate()
            .map(|(i, sig)| {
                *first.entry(SigKey(sig)).or_insert_with(|| {
                    unique.push(i);
                    unique.len() - 1
                })
            })
            .collect();
        (unique, slots)
    } else {
        let all: Vec<usize> = (0..cube.pixel_count()).collect();
        (all.clone(), all)
    };

    let solver = Solver::new(set, cfg);
    let fallback = mean_color(set).map(to_level);

    let colors: Vec<[u8; 3]> = unique
        .par_iter()
        .map_init(
            || (Workspace::new(&solver), vec![0.0f64; cube.bands()]),
            |(ws, x), &pixel| -> Result<[u8; 3]> {
                for (dst, &src) in x.iter_mut().zip(cube.signature_at(pixel)) {
                    *dst = src as f64;
                }
                if x.iter().all(|&v| v == 0.0) {
                    return Ok(fallback);
                }
                solver.solve(x, ws)?;
                Ok(ws.evaluate(x).map(to_level))
            },
        )
        .collect::<Result<_>>()?;

    let mut data = Vec::with_capacity(cube.pixel_count() * 3);
    for &slot in &slot_of {
        data.extend_from_slice(&colors[slot]);
    }
    RgbImage::new(cube.width(), cube.height(), data)
}

/// Renders every `stride`-th pixel along both axes, for quick previews.
pub fn render_strided(
    cube: &SpectralCube,
    set: &ControlPointSet,
    cfg: &MlsConfig,
    stride: usize,
) -> Result<RgbImage> {
    if stride <= 1 {
        render(cube, set, cfg)
    } else {
        render(&cube.subsample(stride), set, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::ControlPair;

    #[test]
    fn one_pixel_one_pair() {
        let cube = SpectralCube::new(1, 1, 3, vec![0.2, 0.4, 0.1]).unwrap();
        let set = ControlPointSet::new(3, "", vec![ControlPair::new(vec![1.0, 1.0, 1.0], [12, 34, 56])]).unwrap();
        let img = render(&cube, &set, &MlsConfig::default()).unwrap();
        assert_eq!(img.pixel(0, 0), [12, 34, 56]);
    }

    #[test]
    fn band_mismatch() {
        let cube = SpectralCube::new(1, 1, 2, vec![0.2, 0.4]).unwrap();
        let set = ControlPointSet::new(3, "", vec![ControlPair::new(vec![1.0, 1.0, 1.0], [0, 0, 0])]).unwrap();
        assert!(matches!(
            render(&cube, &set, &MlsConfig::default()),
            Err(Error::BandMismatch { cube: 2, points: 3 })
        ));
    }

    #[test]
    fn zero_pixels_get_mean_color() {
        let cube = SpectralCube::new(2, 1, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let set = ControlPointSet::new(
            2,
            "",
            vec![
                ControlPair::new(vec![1.0, 0.0], [10, 20, 30]),
                ControlPair::new(vec![0.0, 1.0], [20, 40, 61]),
            ],
        )
        .unwrap();
        let img = render(&cube, &set, &MlsConfig::default()).unwrap();
        assert_eq!(img.pixel(0, 0), [15, 30, 46]);
        assert_eq!(img.pixel(1, 0), [10, 20, 30]);
    }

    #[test]
    fn dedup_does_not_change_output() {
        let cube = SpectralCube::from_fn(6, 5, 3, |x, y| {
            vec![1.0 + (x % 2) as f32, 0.5 + (y % 3) as f32, 0.25 * (x + y) as f32]
        })
        .unwrap();
        let set = ControlPointSet::new(
            3,
            "",
            vec![
                ControlPair::new(vec![1.0, 0.5, 0.1], [200, 30, 30]),
                ControlPair::new(vec![2.0, 2.5, 1.0], [30, 200, 30]),
                ControlPair::new(vec![1.0, 1.5, 2.5], [30, 30, 200]),
                ControlPair::new(vec![2.0, 0.5, 2.0], [120, 120, 20]),
                ControlPair::new(vec![1.5, 1.5, 1.5], [90, 90, 90]),
            ],
        )
        .unwrap();
        let on = render(&cube, &set, &MlsConfig::default()).unwrap();
        let off = render(&cube, &set, &MlsConfig { dedup: false, ..MlsConfig::default() }).unwrap();
        assert_eq!(on, off);
        let preview = render_strided(&cube, &set, &MlsConfig::default(), 2).unwrap();
        assert_eq!((preview.width(), preview.height()), (3, 3));
        assert_eq!(preview.pixel(1, 1), on.pixel(2, 2));
    }
}

//! 8-bit RGB rasters and PNG persistence.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Luminance weights (ITU-R BT.601) shared by matching proxies and entropy.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::LengthMismatch {
                expected: width * height * 3,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self> {
        let data = color.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> [u8; 3],
    {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Real-valued luminance per pixel, row-major, in 0..=255.
    pub fn luminance(&self) -> Vec<f32> {
        self.pixels()
            .map(|[r, g, b]| {
                (LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64) as f32
            })
            .collect()
    }

    /// Luminance rounded to an 8-bit level per pixel.
    pub fn luminance_levels(&self) -> Vec<u8> {
        self.pixels().map(luminance_level).collect()
    }

    pub fn subsample(&self, stride: usize) -> RgbImage {
        let stride = stride.max(1);
        let w = self.width.div_ceil(stride);
        let h = self.height.div_ceil(stride);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in (0..self.height).step_by(stride) {
            for x in (0..self.width).step_by(stride) {
                data.extend_from_slice(&self.pixel(x, y));
            }
        }
        RgbImage { width: w, height: h, data }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .ok_or_else(|| Error::Encode("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

/// Integer BT.601 luminance, rounded half up.
pub fn luminance_level([r, g, b]: [u8; 3]) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// A decoded reference image plus what had to be discarded to get there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedRgb {
    pub image: RgbImage,
    /// The source carried a fourth (alpha) channel that was dropped.
    pub alpha_dropped: bool,
}

/// Decodes PNG (or any format the build supports) bytes into RGB.
///
/// Grayscale is replicated into three channels; alpha is dropped and flagged.
/// Sources deeper than 8 bits are scaled down to 8 bits.
pub fn decode_rgb(bytes: &[u8]) -> Result<DecodedRgb> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let alpha_dropped = img.color().has_alpha();
    let rgb = match img {
        DynamicImage::ImageRgb8(buf) => buf,
        other => other.to_rgb8(),
    };
    let (w, h) = rgb.dimensions();
    Ok(DecodedRgb {
        image: RgbImage::new(w as usize, h as usize, rgb.into_raw())?,
        alpha_dropped,
    })
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<DecodedRgb> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rgb(&bytes)
}

pub fn write_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, image.to_png()?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png_of(img: DynamicImage) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn single_pixel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let img = RgbImage::new(1, 1, vec![10, 20, 30]).unwrap();
        write_rgb(&img, &path).unwrap();
        let back = read_rgb(&path).unwrap();
        assert_eq!(back.image.pixel(0, 0), [10, 20, 30]);
        assert!(!back.alpha_dropped);
    }

    #[test]
    fn grayscale_expands() {
        let gray = image::GrayImage::from_pixel(2, 2, image::Luma([7]));
        let decoded = decode_rgb(&png_of(DynamicImage::ImageLuma8(gray))).unwrap();
        assert_eq!(decoded.image.width(), 2);
        assert!(decoded.image.data().iter().all(|&v| v == 7));
    }

    #[test]
    fn alpha_is_dropped_and_flagged() {
        let rgba = image::RgbaImage::from_pixel(1, 2, image::Rgba([1, 2, 3, 4]));
        let decoded = decode_rgb(&png_of(DynamicImage::ImageRgba8(rgba))).unwrap();
        assert!(decoded.alpha_dropped);
        assert_eq!(decoded.image.pixel(0, 1), [1, 2, 3]);
    }

    #[test]
    fn text_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notes.png");
        std::fs::write(&path, "not an image at all").unwrap();
        assert!(matches!(read_rgb(&path), Err(Error::Decode(_))));
    }

    #[test]
    fn gray_luminance_is_identity() {
        for v in 0..=255u8 {
            assert_eq!(luminance_level([v, v, v]), v);
        }
        assert_eq!(luminance_level([255, 0, 0]), 76);
    }
}

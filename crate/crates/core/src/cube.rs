//! Spectral cubes and the ENVI-style header + raw data format.
//!
//! A header is a text file of `key = value` lines. Recognized keys are
//! `samples`, `lines`, `bands`, `interleave` (`bsq`, `bil` or `bip`),
//! `data type` (1 = u8, 2 = u16, 4 = f32), `byte order` (0 = little,
//! 1 = big), and optionally `header offset`, `data file` and `wavelength`.
//! Unknown keys are ignored. Values wrapped in `{ ... }` may span lines.
//!
//! Cubes are always held pixel-interleaved in memory so that a spectral
//! signature is a contiguous slice, whatever the on-disk interleave was.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    bands: usize,
    values: Vec<f32>,
    wavelengths: Option<Vec<f64>>,
}

impl SpectralCube {
    /// Builds a cube from pixel-interleaved values, `values[(y * width + x) * bands + band]`.
    pub fn new(width: usize, height: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Invalid(format!(
                "cube dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        let expected = width * height * bands;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(format!(
                "cube value {} at index {i} is not a finite non-negative number",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            bands,
            values,
            wavelengths: None,
        })
    }

    /// Builds a cube by evaluating `f(x, y)` for every pixel; `f` returns the signature.
    pub fn from_fn<F>(width: usize, height: usize, bands: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<f32>,
    {
        let mut values = Vec::with_capacity(width * height * bands);
        for y in 0..height {
            for x in 0..width {
                let sig = f(x, y);
                if sig.len() != bands {
                    return Err(Error::LengthMismatch {
                        expected: bands,
                        got: sig.len(),
                    });
                }
                values.extend_from_slice(&sig);
            }
        }
        Self::new(width, height, bands, values)
    }

    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands {
            return Err(Error::LengthMismatch {
                expected: self.bands,
                got: wavelengths.len(),
            });
        }
        if wavelengths.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::Invalid(
                "wavelengths must be strictly increasing".into(),
            ));
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    /// Pixel-interleaved raw values.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, band: usize) -> f32 {
        self.values[(y * self.width + x) * self.bands + band]
    }

    pub fn signature(&self, x: usize, y: usize) -> &[f32] {
        self.signature_at(y * self.width + x)
    }

    /// Signature of the pixel with row-major index `index`.
    pub fn signature_at(&self, index: usize) -> &[f32] {
        let start = index * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn signatures(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.bands)
    }

    /// One band as a row-major single-channel image.
    pub fn band_image(&self, band: usize) -> Vec<f32> {
        assert!(band < self.bands, "band {band} out of range");
        self.signatures().map(|s| s[band]).collect()
    }

    /// Mean over bands for every pixel, row-major.
    pub fn mean_image(&self) -> Vec<f32> {
        let inv = 1.0 / self.bands as f64;
        self.signatures()
            .map(|s| (s.iter().map(|&v| v as f64).sum::<f64>() * inv) as f32)
            .collect()
    }

    /// Keeps every `stride`-th pixel along both axes, starting at (0, 0).
    pub fn subsample(&self, stride: usize) -> SpectralCube {
        let stride = stride.max(1);
        if stride == 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(stride);
        let h = self.height.div_ceil(stride);
        let mut values = Vec::with_capacity(w * h * self.bands);
        for y in (0..self.height).step_by(stride) {
            for x in (0..self.width).step_by(stride) {
                values.extend_from_slice(self.signature(x, y));
            }
        }
        SpectralCube {
            width: w,
            height: h,
            bands: self.bands,
            values,
            wavelengths: self.wavelengths.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl FromStr for Interleave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(Error::Header(format!("unknown interleave '{other}'"))),
        }
    }
}

impl fmt::Display for Interleave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    U16,
    F32,
}

impl DataType {
    pub fn code(self) -> u8 {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::F32 => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DataType::U8),
            2 => Ok(DataType::U16),
            4 => Ok(DataType::F32),
            other => Err(Error::Header(format!("unsupported data type {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: DataType,
    pub byte_order: ByteOrder,
    pub header_offset: usize,
    pub data_file: Option<String>,
    pub wavelengths: Option<Vec<f64>>,
}

impl CubeHeader {
    pub fn new(samples: usize, lines: usize, bands: usize) -> Self {
        Self {
            samples,
            lines,
            bands,
            interleave: Interleave::Bsq,
            data_type: DataType::F32,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            data_file: None,
            wavelengths: None,
        }
    }

    /// Number of data bytes the header describes, excluding `header offset`.
    pub fn data_len(&self) -> u64 {
        self.samples as u64 * self.lines as u64 * self.bands as u64 * self.data_type.size() as u64
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = None;
        let mut lines = None;
        let mut bands = None;
        let mut interleave = None;
        let mut data_type = None;
        let mut byte_order = ByteOrder::Little;
        let mut header_offset = 0;
        let mut data_file = None;
        let mut wavelengths = None;

        for (key, value) in header_entries(text)? {
            match key.as_str() {
                "samples" => samples = Some(parse_dim(&key, &value)?),
                "lines" => lines = Some(parse_dim(&key, &value)?),
                "bands" => bands = Some(parse_dim(&key, &value)?),
                "interleave" => interleave = Some(value.parse::<Interleave>()?),
                "data type" => {
                    let code = value.trim().parse::<u8>().map_err(|_| {
                        Error::Header(format!("unsupported data type '{}'", value.trim()))
                    })?;
                    data_type = Some(DataType::from_code(code)?);
                }
                "byte order" => {
                    byte_order = match value.trim() {
                        "0" => ByteOrder::Little,
                        "1" => ByteOrder::Big,
                        other => {
                            return Err(Error::Header(format!("invalid byte order '{other}'")))
                        }
                    }
                }
                "header offset" => {
                    header_offset = value.trim().parse().map_err(|_| {
                        Error::Header(format!("invalid header offset '{}'", value.trim()))
                    })?
                }
                "data file" => data_file = Some(value.trim().to_string()),
                "wavelength" => {
                    let list = value
                        .trim()
                        .trim_start_matches('{')
                        .trim_end_matches('}')
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<f64>()
                                .map_err(|_| Error::Header(format!("invalid wavelength '{s}'")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    wavelengths = Some(list);
                }
                _ => {}
            }
        }

        let missing = |k: &str| Error::Header(format!("missing '{k}'"));
        Ok(Self {
            samples: samples.ok_or_else(|| missing("samples"))?,
            lines: lines.ok_or_else(|| missing("lines"))?,
            bands: bands.ok_or_else(|| missing("bands"))?,
            interleave: interleave.ok_or_else(|| missing("interleave"))?,
            data_type: data_type.ok_or_else(|| missing("data type"))?,
            byte_order,
            header_offset,
            data_file,
            wavelengths,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("ENVI\n");
        out.push_str(&format!("samples = {}\n", self.samples));
        out.push_str(&format!("lines = {}\n", self.lines));
        out.push_str(&format!("bands = {}\n", self.bands));
        out.push_str(&format!("header offset = {}\n", self.header_offset));
        out.push_str(&format!("data type = {}\n", self.data_type.code()));
        out.push_str(&format!("interleave = {}\n", self.interleave));
        let order = match self.byte_order {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        };
        out.push_str(&format!("byte order = {order}\n"));
        if let Some(file) = &self.data_file {
            out.push_str(&format!("data file = {file}\n"));
        }
        if let Some(wl) = &self.wavelengths {
            let list: Vec<String> = wl.iter().map(|w| w.to_string()).collect();
            out.push_str(&format!("wavelength units = nm\nwavelength = {{{}}}\n", list.join(", ")));
        }
        out
    }
}

fn parse_dim(key: &str, value: &str) -> Result<usize> {
    let v: i64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Header(format!("invalid {key} '{}'", value.trim())))?;
    if v <= 0 {
        return Err(Error::Header(format!("{key} must be positive, got {v}")));
    }
    Ok(v as usize)
}

/// Splits header text into lowercase keys and raw values, joining brace-wrapped
/// values that continue over several lines.
fn header_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') || line.eq_ignore_ascii_case("envi") {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Header(format!("malformed line '{line}'")));
        };
        let mut value = value.trim().to_string();
        if value.starts_with('{') {
            while !value.contains('}') {
                match lines.next() {
                    Some(next) => {
                        value.push(' ');
                        value.push_str(next.trim());
                    }
                    None => return Err(Error::Header(format!("unterminated value for '{}'", key.trim()))),
                }
            }
        }
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase();
        entries.push((key, value));
    }
    Ok(entries)
}

/// Decodes raw cube bytes described by `header` into a pixel-interleaved cube.
pub fn decode_cube(header: &CubeHeader, bytes: &[u8]) -> Result<SpectralCube> {
    let body = bytes.get(header.header_offset..).unwrap_or(&[]);
    let expected = header.data_len();
    let found = body.len() as u64;
    if found < expected {
        return Err(Error::ShortData { expected, found });
    }
    if found > expected {
        return Err(Error::Header(format!(
            "data file has {found} bytes, header describes {expected}"
        )));
    }

    let (w, h, b) = (header.samples, header.lines, header.bands);
    let size = header.data_type.size();
    let read = |i: usize| -> f32 {
        let raw = &body[i * size..(i + 1) * size];
        match (header.data_type, header.byte_order) {
            (DataType::U8, _) => raw[0] as f32,
            (DataType::U16, ByteOrder::Little) => u16::from_le_bytes([raw[0], raw[1]]) as f32,
            (DataType::U16, ByteOrder::Big) => u16::from_be_bytes([raw[0], raw[1]]) as f32,
            (DataType::F32, ByteOrder::Little) => {
                f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]])
            }
            (DataType::F32, ByteOrder::Big) => f32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]),
        }
    };

    let mut values = vec![0f32; w * h * b];
    for y in 0..h {
        for x in 0..w {
            for band in 0..b {
                let src = match header.interleave {
                    Interleave::Bsq => (band * h + y) * w + x,
                    Interleave::Bil => (y * b + band) * w + x,
                    Interleave::Bip => (y * w + x) * b + band,
                };
                values[(y * w + x) * b + band] = read(src);
            }
        }
    }

    let cube = SpectralCube::new(w, h, b, values)?;
    match &header.wavelengths {
        Some(wl) => cube.with_wavelengths(wl.clone()),
        None => Ok(cube),
    }
}

/// Reads a cube from its header path, locating the sibling raw data file.
pub fn read_cube(header_path: impl AsRef<Path>) -> Result<SpectralCube> {
    let header_path = header_path.as_ref();
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = CubeHeader::parse(&text)?;
    let data_path = locate_data_file(header_path, &header)?;
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    decode_cube(&header, &bytes)
}

fn locate_data_file(header_path: &Path, header: &CubeHeader) -> Result<PathBuf> {
    let dir = header_path.parent().unwrap_or_else(|| Path::new(""));
    if let Some(name) = &header.data_file {
        return Ok(dir.join(name));
    }
    let stem = header_path.with_extension("");
    if stem != header_path && stem.is_file() {
        return Ok(stem);
    }
    for ext in ["raw", "img", "dat", "bsq", "bil", "bip"] {
        let candidate = header_path.with_extension(ext);
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::NotFound(header_path.with_extension("raw")))
}

/// Encodes a cube as band-sequential bytes in the given type and byte order.
pub fn encode_cube(cube: &SpectralCube, data_type: DataType, byte_order: ByteOrder) -> Result<Vec<u8>> {
    let (w, h, b) = (cube.width(), cube.height(), cube.bands());
    let mut out = Vec::with_capacity(w * h * b * data_type.size());
    for band in 0..b {
        for y in 0..h {
            for x in 0..w {
                let v = cube.get(x, y, band);
                match data_type {
                    DataType::F32 => match byte_order {
                        ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
                        ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
                    },
                    DataType::U8 | DataType::U16 => {
                        let max = if data_type == DataType::U8 { 255.0 } else { 65535.0 };
                        if v.fract() != 0.0 || v > max {
                            return Err(Error::Invalid(format!(
                                "value {v} is not representable as {data_type:?}"
                            )));
                        }
                        if data_type == DataType::U8 {
                            out.push(v as u8);
                        } else {
                            let v = v as u16;
                            match byte_order {
                                ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
                                ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Writes `header_path` plus a band-sequential sibling `<stem>.raw`.
pub fn write_cube(cube: &SpectralCube, header_path: impl AsRef<Path>, data_type: DataType) -> Result<()> {
    let header_path = header_path.as_ref();
    let data_path = header_path.with_extension("raw");
    let data_name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Invalid(format!("bad header path {}", header_path.display())))?;

    let mut header = CubeHeader::new(cube.width(), cube.height(), cube.bands());
    header.data_type = data_type;
    header.data_file = Some(data_name);
    header.wavelengths = cube.wavelengths().map(<[f64]>::to_vec);

    let bytes = encode_cube(cube, data_type, ByteOrder::Little)?;
    std::fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    std::fs::write(header_path, header.to_text()).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(interleave: &str, dtype: u8) -> String {
        format!(
            "ENVI\nsamples = 2\nlines = 2\nbands = 3\ninterleave = {interleave}\ndata type = {dtype}\nbyte order = 0\n"
        )
    }

    // Logical cube value at (x, y, band) for the interleave tests.
    fn logical(x: usize, y: usize, band: usize) -> u8 {
        (band * 100 + y * 10 + x) as u8
    }

    fn layout(interleave: Interleave) -> Vec<u8> {
        let (w, h, b) = (2, 2, 3);
        let mut out = Vec::new();
        match interleave {
            Interleave::Bsq => {
                for band in 0..b {
                    for y in 0..h {
                        for x in 0..w {
                            out.push(logical(x, y, band));
                        }
                    }
                }
            }
            Interleave::Bil => {
                for y in 0..h {
                    for band in 0..b {
                        for x in 0..w {
                            out.push(logical(x, y, band));
                        }
                    }
                }
            }
            Interleave::Bip => {
                for y in 0..h {
                    for x in 0..w {
                        for band in 0..b {
                            out.push(logical(x, y, band));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_bsq_u8() {
        let h = CubeHeader::parse(&header("bsq", 1)).unwrap();
        let cube = decode_cube(&h, &[0u8; 12]).unwrap();
        assert_eq!((cube.width(), cube.height(), cube.bands()), (2, 2, 3));
        assert!(cube.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interleaves_agree() {
        let bsq = decode_cube(&CubeHeader::parse(&header("bsq", 1)).unwrap(), &layout(Interleave::Bsq)).unwrap();
        let bil = decode_cube(&CubeHeader::parse(&header("bil", 1)).unwrap(), &layout(Interleave::Bil)).unwrap();
        let bip = decode_cube(&CubeHeader::parse(&header("bip", 1)).unwrap(), &layout(Interleave::Bip)).unwrap();
        assert_eq!(bsq, bil);
        assert_eq!(bsq, bip);
        assert_eq!(bsq.get(1, 0, 2), 201.0);
        assert_eq!(bsq.signature(0, 1), &[10.0, 110.0, 210.0]);
    }

    #[test]
    fn short_data_file() {
        let h = CubeHeader::parse(&header("bsq", 1)).unwrap();
        let err = decode_cube(&h, &[0u8; 11]).unwrap_err();
        assert!(matches!(err, Error::ShortData { expected: 12, found: 11 }));
        assert!(err.to_string().contains("short data file"));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(CubeHeader::parse(&header("bsx", 1)).is_err());
        assert!(CubeHeader::parse(&header("bsq", 3)).is_err());
        let zero = "samples = 0\nlines = 2\nbands = 3\ninterleave = bsq\ndata type = 1\n";
        assert!(matches!(CubeHeader::parse(zero), Err(Error::Header(_))));
        let missing = "samples = 2\nlines = 2\ninterleave = bsq\ndata type = 1\n";
        assert!(CubeHeader::parse(missing).is_err());
    }

    #[test]
    fn u16_big_endian_and_multiline_wavelengths() {
        let text = "ENVI\nsamples = 1\nlines = 1\nbands = 2\ninterleave = bip\ndata type = 2\nbyte order = 1\nwavelength = {\n 460.0,\n 470.0 }\n";
        let h = CubeHeader::parse(text).unwrap();
        let cube = decode_cube(&h, &[0x01, 0x02, 0x00, 0x07]).unwrap();
        assert_eq!(cube.signature(0, 0), &[258.0, 7.0]);
        assert_eq!(cube.wavelengths(), Some(&[460.0, 470.0][..]));
    }

    #[test]
    fn constructor_rejects_invalid_values() {
        assert!(SpectralCube::new(1, 1, 2, vec![1.0, -1.0]).is_err());
        assert!(SpectralCube::new(1, 1, 2, vec![1.0, f32::NAN]).is_err());
        assert!(SpectralCube::new(1, 1, 2, vec![1.0]).is_err());
        let cube = SpectralCube::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        assert!(cube.clone().with_wavelengths(vec![500.0, 400.0]).is_err());
        assert!(cube.with_wavelengths(vec![400.0]).is_err());
    }

    #[test]
    fn write_then_read_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.hdr");
        let cube = SpectralCube::from_fn(3, 2, 4, |x, y| (0..4).map(|b| (x + 3 * y) as f32 * 0.5 + b as f32).collect())
            .unwrap()
            .with_wavelengths(vec![450.0, 500.0, 550.0, 600.0])
            .unwrap();
        write_cube(&cube, &path, DataType::F32).unwrap();
        assert_eq!(read_cube(&path).unwrap(), cube);
    }

    #[test]
    fn missing_data_file_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lonely.hdr");
        std::fs::write(&path, header("bsq", 1)).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::NotFound(_))));
    }

    #[test]
    fn subsample_keeps_origin_grid() {
        let cube = SpectralCube::from_fn(5, 3, 1, |x, y| vec![(10 * y + x) as f32]).unwrap();
        let s = cube.subsample(2);
        assert_eq!((s.width(), s.height()), (3, 2));
        assert_eq!(s.band_image(0), vec![0.0, 2.0, 4.0, 20.0, 22.0, 24.0]);
    }
}

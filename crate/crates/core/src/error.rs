use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("short data file: expected {expected} bytes, found {found}")]
    ShortData { expected: u64, found: u64 },

    #[error("invalid cube header: {0}")]
    Header(String),

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("image encode error: {0}")]
    Encode(String),

    #[error("control-point schema error: {0}")]
    Schema(String),

    #[error("zero spectral signature at {0}: the spectral angle is undefined for a zero vector")]
    ZeroSignature(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("band mismatch: cube has {cube} bands, control points have {points} bands")]
    BandMismatch { cube: usize, points: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("singular normal matrix; use a ridge lambda > 0")]
    Singular,

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("homography estimation failed: {0}")]
    Homography(String),

    #[error("point ({x:.2}, {y:.2}) projects outside the image")]
    OutOfBounds { x: f64, y: f64 },

    #[error("no control points survived matching")]
    NoControlPoints,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}

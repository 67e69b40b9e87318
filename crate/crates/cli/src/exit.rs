use std::fmt;

use spectra_core::Error;

/// Process exit statuses. The numeric values are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Internal = 1,
    Input = 2,
    Schema = 3,
    Usage = 4,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Usage, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Internal, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotFound(_)
            | Error::Io { .. }
            | Error::ShortData { .. }
            | Error::Header(_)
            | Error::Decode(_)
            | Error::Encode(_) => ExitCode::Input,
            Error::Schema(_)
            | Error::ZeroSignature(_)
            | Error::LengthMismatch { .. }
            | Error::BandMismatch { .. }
            | Error::DimensionMismatch(_)
            | Error::ImageTooSmall { .. } => ExitCode::Schema,
            Error::Invalid(_) => ExitCode::Usage,
            Error::Singular | Error::Homography(_) | Error::OutOfBounds { .. } | Error::NoControlPoints => {
                ExitCode::Internal
            }
        };
        Self::new(code, e.to_string())
    }
}

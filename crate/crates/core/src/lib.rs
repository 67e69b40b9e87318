//! Natural-color rendering of hyperspectral cubes by moving least squares
//! color transfer from a reference RGB image.
//!
//! The crate is organized around four stages:
//!
//! - [`cube`], [`rgb`] and [`points`] read and write the rasters and control-point files.
//! - [`matching`] discovers control points automatically.
//! - [`mls`] solves one weighted affine map per signature and renders the cube.
//! - [`metrics`] scores a rendering by entropy and RMSE.

pub mod cube;
pub mod error;
pub mod matching;
pub mod metrics;
pub mod mls;
pub mod points;
pub mod rgb;
pub mod synthetic;

pub use cube::{read_cube, write_cube, CubeHeader, DataType, SpectralCube};
pub use error::{Error, Result};
pub use matching::{build_control_points, Homography, MatchConfig, MatchOutcome};
pub use metrics::MetricReport;
pub use mls::{render, render_strided, AffineColorMap, MlsConfig, Ridge};
pub use points::{read_control_points, write_control_points, ControlPair, ControlPointSet};
pub use rgb::{read_rgb, write_rgb, RgbImage};

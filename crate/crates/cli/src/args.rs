use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spectra_core::matching::DEFAULT_SEED;
use spectra_core::{MatchConfig, MlsConfig, Ridge};

#[derive(Debug, Clone, Parser)]
#[command(name = "spectra", version, about = "Natural-color rendering of hyperspectral cubes")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "SPECTRA_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Find control points between a cube and a reference RGB image.
    Match(MatchArgs),
    /// Render a cube to RGB from a control-point file.
    Render(RenderArgs),
    /// Entropy of a rendering and its RMSE against a reference image.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// ENVI header of the cube.
    pub cube: PathBuf,
    /// Reference RGB image.
    pub rgb: PathBuf,
    /// Control-point file to write.
    pub out: PathBuf,

    /// Fraction of cube pixels sampled for refinement, in (0, 1].
    #[arg(long, allow_negative_numbers = true, default_value_t = MatchConfig::default().sample_fraction)]
    pub sample_fraction: f64,

    /// Half-width of the refinement search window, in pixels.
    #[arg(long, default_value_t = MatchConfig::default().window_radius)]
    pub window_radius: usize,

    /// Seed for pixel sampling and RANSAC.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Sensor tag stored in the control-point file.
    #[arg(long, default_value = "")]
    pub sensor: String,

    /// Also write the estimated homography (cube to RGB pixels) as JSON rows.
    #[arg(long)]
    pub homography_out: Option<PathBuf>,

    /// Run report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl MatchArgs {
    pub fn config(&self) -> MatchConfig {
        MatchConfig {
            sample_fraction: self.sample_fraction,
            window_radius: self.window_radius,
            rng_seed: self.seed,
            ..MatchConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// ENVI header of the cube.
    pub cube: PathBuf,
    /// Control-point file.
    pub points: PathBuf,
    /// PNG to write.
    pub out: PathBuf,

    /// Fixed ridge term; without it the ridge is 1e-6 times the mean diagonal
    /// of the weighted normal matrix.
    #[arg(long, allow_negative_numbers = true)]
    pub ridge_lambda: Option<f64>,

    /// Floor on the spectral angle, in radians.
    #[arg(long, allow_negative_numbers = true, default_value_t = MlsConfig::default().sad_epsilon)]
    pub sad_epsilon: f64,

    /// Weight exponent.
    #[arg(long, allow_negative_numbers = true, default_value_t = MlsConfig::default().weight_exponent)]
    pub beta: f64,

    /// Render every n-th pixel along both axes.
    #[arg(long, default_value_t = 1)]
    pub preview_stride: usize,

    /// Warn when the control points carry a different sensor tag.
    #[arg(long)]
    pub expect_sensor: Option<String>,

    /// Run report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl RenderArgs {
    pub fn config(&self) -> MlsConfig {
        MlsConfig {
            sad_epsilon: self.sad_epsilon,
            ridge: self.ridge_lambda.map_or(MlsConfig::default().ridge, Ridge::Fixed),
            weight_exponent: self.beta,
            ..MlsConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Rendered image.
    pub rendered: PathBuf,
    /// Reference RGB image.
    pub reference: PathBuf,

    /// Homography JSON mapping rendered pixels into the reference; the
    /// reference is resampled onto the rendered grid before comparison.
    #[arg(long)]
    pub warp_homography: Option<PathBuf>,

    /// Also write the run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

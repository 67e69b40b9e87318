use std::path::Path;

use serde::Serialize;
use spectra_core::metrics::{entropy, rmse, rmse_masked};
use spectra_core::{
    build_control_points, read_control_points, read_cube, read_rgb, render_strided, write_control_points, write_rgb,
    ControlPointSet, Homography, MetricReport, RgbImage,
};

use crate::args::{MatchArgs, MetricsArgs, RenderArgs};
use crate::exit::{CliError, ExitCode};
use crate::report::RunReport;

#[derive(Serialize)]
struct MatchDetails {
    homography: Homography,
    inliers: usize,
    keypoint_matches: usize,
    sampled: usize,
    skipped_zero: usize,
    skipped_out_of_bounds: usize,
    points: usize,
}

#[derive(Serialize)]
struct RenderDetails {
    width: usize,
    height: usize,
    bands: usize,
    points: usize,
    sensor: String,
}

fn details<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::internal(e.to_string()))
}

fn read_reference(path: &Path, report: &mut RunReport) -> Result<RgbImage, CliError> {
    let decoded = report.timed("read", || read_rgb(path))?;
    if decoded.alpha_dropped {
        report.warn(format!("{}: alpha channel ignored", path.display()));
    }
    Ok(decoded.image)
}

pub fn cmd_match(args: &MatchArgs) -> Result<RunReport, CliError> {
    let cfg = args.config();
    cfg.validate()?;
    let mut report = RunReport::new("match", &[&args.cube, &args.rgb]);
    let cube = report.timed("read", || read_cube(&args.cube))?;
    let rgb = read_reference(&args.rgb, &mut report)?;

    let outcome = report.timed("match", || build_control_points(&cube, &rgb, &cfg))?;
    if outcome.skipped_zero > 0 {
        report.warn(format!("{} sampled pixels skipped: zero signature", outcome.skipped_zero));
    }
    if outcome.skipped_out_of_bounds > 0 {
        report.warn(format!(
            "{} sampled pixels skipped: projected outside the RGB image",
            outcome.skipped_out_of_bounds
        ));
    }
    let points = ControlPointSet::new(cube.bands(), args.sensor.clone(), outcome.points.pairs().to_vec())?;

    report.timed("write", || write_control_points(&points, &args.out))?;
    report.outputs.push(args.out.clone());
    if let Some(path) = &args.homography_out {
        let text = serde_json::to_string_pretty(&outcome.homography).map_err(|e| CliError::internal(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::new(ExitCode::Input, format!("cannot write {}: {e}", path.display())))?;
        report.outputs.push(path.clone());
    }
    report.details = details(&MatchDetails {
        homography: outcome.homography,
        inliers: outcome.inliers,
        keypoint_matches: outcome.keypoint_matches,
        sampled: outcome.sampled,
        skipped_zero: outcome.skipped_zero,
        skipped_out_of_bounds: outcome.skipped_out_of_bounds,
        points: points.len(),
    })?;
    Ok(report)
}

pub fn cmd_render(args: &RenderArgs) -> Result<RunReport, CliError> {
    let cfg = args.config();
    cfg.validate()?;
    if args.preview_stride == 0 {
        return Err(CliError::usage("preview stride must be at least 1"));
    }
    let mut report = RunReport::new("render", &[&args.cube, &args.points]);
    let cube = report.timed("read", || read_cube(&args.cube))?;
    let points = report.timed("read", || read_control_points(&args.points))?;
    if let Some(expected) = &args.expect_sensor {
        if expected != points.sensor() {
            report.warn(format!(
                "control points were taken with sensor {:?}, expected {:?}",
                points.sensor(),
                expected
            ));
        }
    }

    let image = report.timed("render", || render_strided(&cube, &points, &cfg, args.preview_stride))?;
    report.timed("write", || write_rgb(&image, &args.out))?;
    report.outputs.push(args.out.clone());
    report.details = details(&RenderDetails {
        width: image.width(),
        height: image.height(),
        bands: cube.bands(),
        points: points.len(),
        sensor: points.sensor().to_owned(),
    })?;
    Ok(report)
}

fn read_homography(path: &Path) -> Result<Homography, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::new(ExitCode::Input, format!("input not found: {}", path.display()))
        } else {
            CliError::new(ExitCode::Input, format!("cannot read {}: {e}", path.display()))
        }
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(ExitCode::Schema, format!("{}: not a homography: {e}", path.display())))
}

/// RMSE of `rendered` against `reference`, optionally resampled through `warp`,
/// and the number of rendered pixels left without a reference value.
fn compare(rendered: &RgbImage, reference: &RgbImage, warp: Option<&Homography>) -> Result<(f64, usize), CliError> {
    match warp {
        Some(h) => {
            let (warped, mask) = h.warp_image(reference, rendered.width(), rendered.height());
            let uncovered = mask.iter().filter(|&&m| !m).count();
            Ok((rmse_masked(rendered, &warped, Some(&mask))?, uncovered))
        }
        None => {
            if (rendered.width(), rendered.height()) != (reference.width(), reference.height()) {
                return Err(CliError::usage(format!(
                    "image sizes differ ({}x{} vs {}x{}); pass --warp-homography to register them",
                    rendered.width(),
                    rendered.height(),
                    reference.width(),
                    reference.height()
                )));
            }
            Ok((rmse(rendered, reference)?, 0))
        }
    }
}

/// Returns the report; its `details` hold the [`MetricReport`].
pub fn cmd_metrics(args: &MetricsArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("metrics", &[&args.rendered, &args.reference]);
    let rendered = read_reference(&args.rendered, &mut report)?;
    let reference = read_reference(&args.reference, &mut report)?;
    let warp = match &args.warp_homography {
        Some(path) => {
            report.inputs.push(path.clone());
            Some(read_homography(path)?)
        }
        None => None,
    };

    let (error, uncovered) = report.timed("metrics", || compare(&rendered, &reference, warp.as_ref()))?;
    if uncovered > 0 {
        report.warn(format!(
            "{uncovered} of {} pixels fall outside the warped reference and are ignored",
            rendered.pixel_count()
        ));
    }
    report.details = details(&MetricReport {
        entropy_bits: entropy(&rendered),
        rmse: Some(error),
        pixel_count: rendered.pixel_count(),
    })?;
    Ok(report)
}

use std::path::{Path, PathBuf};
use std::process::Command;

use spectra_cli::{run_from, RunReport};
use spectra_core::{
    read_control_points, read_rgb, synthetic, write_control_points, write_cube, write_rgb, ControlPair,
    ControlPointSet, DataType, RgbImage, SpectralCube,
};
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    run_from(std::iter::once("spectra").chain(args.iter().copied()))
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spectra"))
        .args(args)
        .env_remove("SPECTRA_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_report(path: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// 96×96, 8-band cube lifted from a blob texture, plus that texture.
fn aligned_inputs(dir: &Path) -> (PathBuf, PathBuf, SpectralCube) {
    let rgb = synthetic::blob_texture(96, 96, 70, 6);
    let cube = synthetic::spectral_lift(&rgb, 8);
    let hdr = dir.join("scene.hdr");
    let png = dir.join("scene.png");
    write_cube(&cube, &hdr, DataType::F32).unwrap();
    write_rgb(&rgb, &png).unwrap();
    (hdr, png, cube)
}

fn small_render_inputs(dir: &Path, sensor: &str) -> (PathBuf, PathBuf) {
    let cube = SpectralCube::from_fn(12, 9, 3, |x, y| vec![1.0 + x as f32, 2.0 + y as f32, 3.0 + (x * y) as f32]).unwrap();
    let pairs = vec![
        ControlPair::new(vec![1.0, 2.0, 3.0], [200, 10, 10]),
        ControlPair::new(vec![12.0, 2.0, 3.0], [10, 200, 10]),
        ControlPair::new(vec![1.0, 10.0, 3.0], [10, 10, 200]),
        ControlPair::new(vec![12.0, 10.0, 90.0], [120, 120, 120]),
    ];
    let set = ControlPointSet::new(3, sensor, pairs).unwrap();
    let hdr = dir.join("small.hdr");
    let pts = dir.join("small.json");
    write_cube(&cube, &hdr, DataType::F32).unwrap();
    write_control_points(&set, &pts).unwrap();
    (hdr, pts)
}

#[test]
fn match_on_aligned_scene_writes_expected_points() {
    let dir = TempDir::new().unwrap();
    let (hdr, png, cube) = aligned_inputs(dir.path());
    let out = dir.path().join("points.json");
    let h_out = dir.path().join("h.json");
    assert_eq!(run(&["match", s(&hdr), s(&png), s(&out), "--homography-out", s(&h_out)]), 0);

    let report = read_report(&dir.path().join("points.json.report.json"));
    assert_eq!(report.command, "match");
    for o in &report.outputs {
        assert!(o.exists());
    }
    let d = &report.details;
    let sampled = d["sampled"].as_u64().unwrap() as usize;
    assert_eq!(sampled, (0.01f64 * 96.0 * 96.0).ceil() as usize);
    let skipped = (d["skipped_zero"].as_u64().unwrap() + d["skipped_out_of_bounds"].as_u64().unwrap()) as usize;

    let set = read_control_points(&out).unwrap();
    assert_eq!(set.len(), sampled - skipped);
    assert_eq!(set.bands(), 8);
    let rgb = read_rgb(&png).unwrap().image;
    for pair in set.iter() {
        let [hx, hy] = pair.hsi.unwrap();
        let [rx, ry] = pair.rgb.unwrap();
        let sig: Vec<f64> = cube.signature(hx, hy).iter().map(|&v| v as f64).collect();
        assert_eq!(pair.u, sig);
        assert_eq!(pair.v, rgb.pixel(rx, ry));
    }
    let h: spectra_core::Homography = serde_json::from_str(&std::fs::read_to_string(&h_out).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(h).unwrap(), d["homography"]);
}

#[test]
fn match_sensor_flag_is_stored() {
    let dir = TempDir::new().unwrap();
    let (hdr, png, _) = aligned_inputs(dir.path());
    let out = dir.path().join("p.json");
    assert_eq!(run(&["match", s(&hdr), s(&png), s(&out), "--sensor", "AVIRIS"]), 0);
    assert_eq!(read_control_points(&out).unwrap().sensor(), "AVIRIS");
}

#[test]
fn match_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let (hdr, png, _) = aligned_inputs(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(run(&["match", s(&hdr), s(&png), s(&a), "--threads", "1"]), 0);
    assert_eq!(run(&["match", s(&hdr), s(&png), s(&b), "--threads", "3"]), 0);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn missing_rgb_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (hdr, _, _) = aligned_inputs(dir.path());
    let missing = dir.path().join("nope.png");
    let out = bin(&["match", s(&hdr), s(&missing), s(&dir.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input not found"));
}

#[test]
fn corrupt_cube_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (hdr, png, _) = aligned_inputs(dir.path());
    std::fs::write(hdr.with_extension("raw"), [0u8; 10]).unwrap();
    let out = bin(&["match", s(&hdr), s(&png), s(&dir.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("short data file"));
}

#[test]
fn zero_sample_fraction_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (hdr, png, _) = aligned_inputs(dir.path());
    let out = dir.path().join("p.json");
    assert_eq!(run(&["match", s(&hdr), s(&png), s(&out), "--sample-fraction", "0"]), 4);
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_4_and_help_exits_0() {
    assert_eq!(bin(&["render"]).status.code(), Some(4));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(4));
    assert_eq!(bin(&["render", "a", "b", "c", "--beta", "x"]).status.code(), Some(4));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn threads_fall_back_to_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_spectra"))
        .args(["metrics", "a.png", "b.png"])
        .env("SPECTRA_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("many"));
}

#[test]
fn single_pixel_single_pair_renders_its_color() {
    let dir = TempDir::new().unwrap();
    let hdr = dir.path().join("one.hdr");
    let pts = dir.path().join("one.json");
    let png = dir.path().join("one.png");
    write_cube(&SpectralCube::new(1, 1, 4, vec![3.0, 1.0, 4.0, 1.0]).unwrap(), &hdr, DataType::F32).unwrap();
    let set = ControlPointSet::new(4, "", vec![ControlPair::new(vec![2.0, 7.0, 1.0, 8.0], [31, 41, 59])]).unwrap();
    write_control_points(&set, &pts).unwrap();
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png)]), 0);
    let img = read_rgb(&png).unwrap().image;
    assert_eq!((img.width(), img.height()), (1, 1));
    assert_eq!(img.pixel(0, 0), [31, 41, 59]);
}

#[test]
fn render_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let (hdr, pts) = small_render_inputs(dir.path(), "");
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("r{i}.png"))).collect();
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&outs[0])]), 0);
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&outs[1]), "--threads", "1"]), 0);
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&outs[2]), "--threads", "4"]), 0);
    let bytes: Vec<Vec<u8>> = outs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
}

#[test]
fn render_report_lists_existing_outputs() {
    let dir = TempDir::new().unwrap();
    let (hdr, pts) = small_render_inputs(dir.path(), "");
    let png = dir.path().join("r.png");
    let report_path = dir.path().join("custom.json");
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--report", s(&report_path)]), 0);
    let report = read_report(&report_path);
    assert_eq!(report.command, "render");
    assert_eq!(report.outputs, vec![png.clone()]);
    assert!(png.exists());
    assert!(report.timings_ms.contains_key("render"));
    assert_eq!(report.details["points"], 4);
}

#[test]
fn preview_stride_subsamples() {
    let dir = TempDir::new().unwrap();
    let (hdr, pts) = small_render_inputs(dir.path(), "");
    let png = dir.path().join("r.png");
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--preview-stride", "4"]), 0);
    let img = read_rgb(&png).unwrap().image;
    assert_eq!((img.width(), img.height()), (3, 3));
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--preview-stride", "0"]), 4);
}

#[test]
fn sensor_mismatch_is_only_a_warning() {
    let dir = TempDir::new().unwrap();
    let (hdr, pts) = small_render_inputs(dir.path(), "HYDICE");
    let png = dir.path().join("r.png");
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--expect-sensor", "AVIRIS"]), 0);
    let report = read_report(&dir.path().join("r.png.report.json"));
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("HYDICE") && report.warnings[0].contains("AVIRIS"));

    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--expect-sensor", "HYDICE"]), 0);
    assert!(read_report(&dir.path().join("r.png.report.json")).warnings.is_empty());
}

#[test]
fn band_mismatch_exits_3_naming_both_counts() {
    let dir = TempDir::new().unwrap();
    let (hdr, _) = small_render_inputs(dir.path(), "");
    let pts = dir.path().join("five.json");
    let set = ControlPointSet::new(5, "", vec![ControlPair::new(vec![1.0; 5], [1, 2, 3])]).unwrap();
    write_control_points(&set, &pts).unwrap();
    let out = bin(&["render", s(&hdr), s(&pts), s(&dir.path().join("r.png"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3 bands") && err.contains("5 bands"), "{err}");
}

#[test]
fn invalid_render_parameters_exit_4() {
    let dir = TempDir::new().unwrap();
    let (hdr, pts) = small_render_inputs(dir.path(), "");
    let png = dir.path().join("r.png");
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--sad-epsilon", "0"]), 4);
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--beta", "-1"]), 4);
    assert_eq!(run(&["render", s(&hdr), s(&pts), s(&png), "--ridge-lambda", "-1"]), 4);
}

fn write_image(dir: &Path, name: &str, img: &RgbImage) -> PathBuf {
    let p = dir.join(name);
    write_rgb(img, &p).unwrap();
    p
}

fn metrics(args: &[&str]) -> (i32, serde_json::Value) {
    let out = bin(args);
    let code = out.status.code().unwrap();
    let value = serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null);
    (code, value)
}

#[test]
fn metrics_of_identical_files() {
    let dir = TempDir::new().unwrap();
    let img = synthetic::blob_texture(40, 30, 12, 1);
    let a = write_image(dir.path(), "a.png", &img);
    let b = write_image(dir.path(), "b.png", &img);
    let (code, m) = metrics(&["metrics", s(&a), s(&b)]);
    assert_eq!(code, 0);
    assert_eq!(m["rmse"], 0.0);
    assert_eq!(m["entropy_bits"].as_f64().unwrap(), spectra_core::metrics::entropy(&img));
    assert_eq!(m["pixel_count"], 1200);
}

#[test]
fn metrics_of_constant_gray_has_zero_entropy() {
    let dir = TempDir::new().unwrap();
    let gray = RgbImage::filled(8, 8, [128, 128, 128]).unwrap();
    let a = write_image(dir.path(), "a.png", &gray);
    let (code, m) = metrics(&["metrics", s(&a), s(&a)]);
    assert_eq!(code, 0);
    assert_eq!(m["entropy_bits"], 0.0);
}

#[test]
fn metrics_size_mismatch_needs_warp() {
    let dir = TempDir::new().unwrap();
    let a = write_image(dir.path(), "a.png", &RgbImage::filled(8, 8, [1, 2, 3]).unwrap());
    let b = write_image(dir.path(), "b.png", &RgbImage::filled(9, 8, [1, 2, 3]).unwrap());
    assert_eq!(metrics(&["metrics", s(&a), s(&b)]).0, 4);
}

#[test]
fn metrics_warp_registers_reference() {
    let dir = TempDir::new().unwrap();
    let reference = synthetic::blob_texture(50, 40, 15, 2);
    // The rendering sees the reference shifted by (5, 3).
    let rendered = RgbImage::from_fn(30, 20, |x, y| reference.pixel(x + 5, y + 3)).unwrap();
    let a = write_image(dir.path(), "r.png", &rendered);
    let b = write_image(dir.path(), "ref.png", &reference);
    let h = dir.path().join("h.json");
    std::fs::write(&h, "[[1,0,5],[0,1,3],[0,0,1]]").unwrap();
    let report = dir.path().join("m.json");
    let (code, m) = metrics(&["metrics", s(&a), s(&b), "--warp-homography", s(&h), "--report", s(&report)]);
    assert_eq!(code, 0);
    assert_eq!(m["rmse"], 0.0);
    assert_eq!(read_report(&report).details, m);

    std::fs::write(&h, "[[1,0],[0,1]]").unwrap();
    assert_eq!(metrics(&["metrics", s(&a), s(&b), "--warp-homography", s(&h)]).0, 3);
}

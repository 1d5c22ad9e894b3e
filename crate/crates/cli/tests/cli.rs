use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use wavegrad::field::{save_field_csv, write_pgm, PgmEncoding};
use wavegrad::harness::ErrorMask;
use wavegrad::{catalog, sample_field, BinGrid, GradientDensity, GridSpec};

fn wavegrad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavegrad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_image(path: &Path, width: usize, height: usize, pixel: impl Fn(usize, usize) -> u16) {
    let pixels: Vec<u16> = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .map(|(r, c)| pixel(r, c))
        .collect();
    let mut buf = Vec::new();
    write_pgm(&mut buf, width, height, 255, &pixels, PgmEncoding::Ascii).unwrap();
    std::fs::write(path, buf).unwrap();
}

#[test]
fn estimate_reproduces_the_uniform_density() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = wavegrad(&["estimate", "--fn", "quadratic1d", "--n", "4096", "--tau", "auto", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let density = GradientDensity::load_csv(out.join("density.csv")).unwrap();
    let grid = BinGrid::cube(1, -1.3, 1.3, 65).unwrap();
    let coarse = density.rebin(&grid).unwrap();
    let interior = ErrorMask::outside_box(&grid, &[-0.9], &[0.9]);
    for (k, v) in coarse.values.iter().enumerate() {
        if !interior.is_excluded(k) {
            assert!((v - 0.5).abs() < 0.02, "bin {k}: {v}");
        }
    }
    let meta = json(out.join("metadata.json"));
    assert!(meta["pre_norm_deviation"].as_f64().unwrap() < 1e-9);
    assert_eq!(meta["nyquist_range"][0].as_f64().unwrap(), 1.5);
}

#[test]
fn estimate_enforces_the_nyquist_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let ok = wavegrad(&["estimate", "--fn", "quadratic1d", "--n", "4096", "--tau", "10", "--out", out.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let bad = wavegrad(&["estimate", "--fn", "quadratic1d", "--n", "4096", "--tau", "1e-9", "--out", out.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("nyquist"), "{}", stderr(&bad));
}

#[test]
fn field_file_matches_catalog_path() {
    let dir = tempfile::tempdir().unwrap();
    let f = catalog("quadratic1d").unwrap();
    let field = sample_field(&f, f.domain(), &GridSpec::new(vec![4096]).unwrap()).unwrap();
    let csv = dir.path().join("f.csv");
    save_field_csv(&csv, &field).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let tau = "0.0005";
    let o = wavegrad(&["estimate", "--fn", "quadratic1d", "--n", "4096", "--tau", tau, "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = wavegrad(&["estimate", "--field", csv.to_str().unwrap(), "--tau", tau, "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("density.csv")).unwrap(),
        std::fs::read(b.join("density.csv")).unwrap()
    );
}

#[test]
fn exactly_one_source_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let both = wavegrad(&["estimate", "--fn", "quadratic1d", "--field", "x.csv", "--out", out]);
    assert!(!both.status.success());
    let none = wavegrad(&["estimate", "--out", out]);
    assert!(!none.status.success());
}

#[test]
fn compare_writes_matrix_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = wavegrad(&["compare", "--fn", "quadratic1d", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = json(out.join("comparison.json"));
    let l1 = cmp["l1"].as_array().unwrap();
    assert_eq!(l1.len(), 5);
    for row in l1 {
        for v in row.as_array().unwrap() {
            assert!(v.as_f64().unwrap() <= 0.08);
        }
    }
    assert_eq!(json(out.join("verdict.json"))["pass"], Value::Bool(true));
}

#[test]
fn compare_masks_the_arcsine_folds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = wavegrad(&["compare", "--fn", "cosine1d", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fraction = json(out.join("comparison.json"))["masked_fraction"].as_f64().unwrap();
    assert!(fraction > 0.0 && fraction <= 0.05);

    let oracle_out = dir.path().join("o");
    let o = wavegrad(&["oracle", "--fn", "cosine1d", "--out", oracle_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let masked = json(oracle_out.join("metadata.json"))["masked_bins"].clone();
    let centers: Vec<f64> = masked
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c[0].as_f64().unwrap())
        .collect();
    assert!(centers.iter().all(|u| (u.abs() - 1.0).abs() < 0.05), "{centers:?}");
}

#[test]
fn compare_rejects_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("i.pgm");
    write_image(&img, 16, 16, |_, c| c as u16);
    let o = wavegrad(&["compare", "--image", img.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("hog"));
}

#[test]
fn sweeps_report_their_gates() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["sweep"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        let o = wavegrad(&args);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(out.join("report.csv").exists());
        (json(out.join("report.json")), json(out.join("verdict.json")))
    };
    let (decay, verdict) = run("decay", &["--kind", "decay", "--fn", "quadratic1d", "--u0", "1.5"]);
    assert!(decay["fit"]["slope"].as_f64().unwrap() >= 0.8);
    assert_eq!(verdict["pass"], Value::Bool(true));

    let (tau, _) = run("tau", &["--kind", "tau", "--fn", "cosine1d", "--u0", "0.5", "--alpha", "0.05"]);
    assert!(tau["summary"]["ball_mass_cv"].as_f64().unwrap() < 0.05);

    let (n, _) = run("n", &["--kind", "n", "--fn", "quadratic1d"]);
    assert!(n["fit"]["slope"].as_f64().unwrap() <= -0.7);

    let (spa, _) = run("spa", &["--kind", "spa", "--fn", "quadratic1d", "--u0", "-0.3"]);
    assert!(spa["fit"]["slope"].as_f64().unwrap() >= 0.4);
}

#[test]
fn decay_inside_the_range_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = wavegrad(&["sweep", "--kind", "decay", "--fn", "quadratic1d", "--u0", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("inside the gradient range"));
}

#[test]
fn unknown_sweep_kind_is_rejected() {
    let o = wavegrad(&["sweep", "--kind", "gamma", "--fn", "quadratic1d", "--out", "/tmp"]);
    assert!(!o.status.success());
}

#[test]
fn hog_finds_ramp_orientation() {
    let dir = tempfile::tempdir().unwrap();
    let across = dir.path().join("across.pgm");
    let down = dir.path().join("down.pgm");
    let flat = dir.path().join("flat.pgm");
    write_image(&across, 64, 64, |_, c| c as u16);
    write_image(&down, 64, 64, |r, _| r as u16);
    write_image(&flat, 32, 32, |_, _| 9);
    let run = |img: &Path, name: &str| {
        let out = dir.path().join(name);
        let o = wavegrad(&[
            "hog", "--image", img.to_str().unwrap(), "--scale", "0.5", "--orient-bins", "8", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(out.join("hog_density.csv").exists());
        json(out.join("metadata.json"))
    };
    let a = run(&across, "a");
    let argmax: Vec<f64> = a["argmax"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let density = GradientDensity::load_csv(dir.path().join("a/hog_density.csv")).unwrap();
    assert_eq!(density.grid.locate(&argmax), density.grid.locate(&[0.5, 0.0]));
    let d = run(&down, "d");
    let shift = (d["orientation_peak"].as_u64().unwrap() + 8 - a["orientation_peak"].as_u64().unwrap()) % 8;
    assert_eq!(shift, 2);
    let f = run(&flat, "f");
    assert_eq!(f["argmax"], serde_json::json!([0.0, 0.0]));
}

#[test]
fn hog_rejects_non_pgm_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    std::fs::write(&csv, "not an image").unwrap();
    let o = wavegrad(&["hog", "--image", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("pgm"));
}

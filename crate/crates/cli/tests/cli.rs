use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tpxspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpxspec"))
        .args(args)
        .output()
        .expect("spawn tpxspec")
}

fn ok(args: &[&str]) -> String {
    let out = tpxspec(args);
    assert!(
        out.status.success(),
        "tpxspec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn walk_override(dir: &Path) -> String {
    format!(
        "cluster.timewalk=\"{}\"",
        dir.join("timewalk.csv").display()
    )
}

/// Argon run plus calibration in `dir/argon`.
fn calibrated(dir: &Path) -> std::path::PathBuf {
    let argon = dir.join("argon");
    ok(&["generate", "--preset", "argon", "--out", s(&argon)]);
    ok(&["calibrate", "--out", s(&argon)]);
    argon.join("calibration.json")
}

const FILES: [&str; 4] = ["hits.phx1", "truth.csv", "timewalk.csv", "source.json"];

#[test]
fn generate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let stdout = ok(&[
        "generate",
        "--preset",
        "argon",
        "--seed",
        "1",
        "--out",
        s(&a),
    ]);
    assert!(stdout.contains(" hits"), "{stdout}");
    let first: Vec<Vec<u8>> = FILES.iter().map(|n| fs::read(a.join(n)).unwrap()).collect();
    ok(&[
        "generate",
        "--preset",
        "argon",
        "--seed",
        "1",
        "--out",
        s(&a),
    ]);
    for (name, before) in FILES.iter().zip(&first) {
        assert!(!before.is_empty(), "{name} empty");
        assert_eq!(
            &fs::read(a.join(name)).unwrap(),
            before,
            "{name} differs between identical runs"
        );
    }
    // The output directory is part of the configuration hash, so only the
    // header-free hit file is compared across directories.
    ok(&[
        "generate",
        "--preset",
        "argon",
        "--seed",
        "1",
        "--out",
        s(&b),
    ]);
    assert_eq!(fs::read(b.join("hits.phx1")).unwrap(), first[0]);
    let source = json(&a.join("source.json"));
    assert!(source["summary"]["hits"].as_u64().unwrap() > 0);
    assert!(source["summary"]["detected"].as_u64().unwrap() > 0);
    assert_eq!(source["provenance"]["seed"], 1);
    let manifest = json(&a.join("generate.manifest.json"));
    assert!(manifest.to_string().contains("hits.phx1"));
}

#[test]
fn csv_output_round_trips_through_calibrate() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("csv");
    ok(&[
        "generate",
        "--preset",
        "argon",
        "--format",
        "csv",
        "--out",
        s(&dir),
    ]);
    let head = fs::read_to_string(dir.join("hits.csv")).unwrap();
    assert!(head.lines().any(|l| l == "x,y,toa_ticks,tot"));
    ok(&["calibrate", "--format", "csv", "--out", s(&dir)]);
    assert!(dir.join("calibration.json").exists());
}

#[test]
fn zero_duration_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let out = tpxspec(&["generate", "--duration", "0", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let out = tpxspec(&[
        "--set",
        "coinc.windw_ns=3",
        "generate",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("windw_ns"));
}

#[test]
fn calibrate_recovers_both_dispersions() {
    let tmp = TempDir::new().unwrap();
    let cal = json(&calibrated(tmp.path()));
    for (channel, slope) in [("bottom", 0.462), ("top", 0.467)] {
        let got = cal["channels"][channel]["calibration"]["slope"]
            .as_f64()
            .unwrap();
        assert!((got - slope).abs() < 0.005, "{channel}: slope {got}");
    }
    for name in [
        "projection_bottom.csv",
        "calibration_top_scale.svg",
        "calibration_bottom_lines.svg",
    ] {
        assert!(
            tmp.path().join("argon").join(name).exists(),
            "{name} missing"
        );
    }
}

#[test]
fn missing_hit_file_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = tpxspec(&[
        "calibrate",
        "--hits",
        s(&tmp.path().join("absent.phx1")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_without_calibration_points_at_calibrate() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("pairs");
    ok(&[
        "generate",
        "--preset",
        "spdc-50mw",
        "--duration",
        "0.2",
        "--out",
        s(&dir),
    ]);
    let out = tpxspec(&["analyze", "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibrate"));
}

#[test]
fn analyze_reproduces_the_high_power_setting() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrated(tmp.path());
    let dir = tmp.path().join("p150");
    ok(&["generate", "--preset", "spdc-150mw", "--out", s(&dir)]);
    let walk = walk_override(&dir);
    ok(&[
        "analyze",
        "--out",
        s(&dir),
        "--calibration",
        s(&cal),
        "--set",
        &walk,
    ]);
    let summary = json(&dir.join("summary.json"));
    let f = |a: &str, b: &str| summary[a][b].as_f64().unwrap_or(f64::NAN);
    assert!((f("signal", "median_nm") - 810.4).abs() <= 0.3, "{summary}");
    assert!((f("idler", "median_nm") - 808.9).abs() <= 0.3, "{summary}");
    assert!(
        (f("signal", "fwhm_nm") / 9.9 - 1.0).abs() <= 0.15,
        "{summary}"
    );
    assert!(
        (f("idler", "fwhm_nm") / 6.9 - 1.0).abs() <= 0.15,
        "{summary}"
    );
    assert!((f("pump", "central_nm") - 404.8).abs() <= 0.05, "{summary}");
    assert!(
        (f("coincidence", "resolution_sigma_ns") / 7.0 - 1.0).abs() <= 0.1,
        "{summary}"
    );
    assert!(summary["jsi_correlation"].as_f64().unwrap() < -0.5);
    for name in [
        "jsi.svg",
        "pump.svg",
        "dt.svg",
        "spectra.svg",
        "coincidences.csv",
        "analyze.manifest.json",
    ] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    let csv = fs::read_to_string(dir.join("coincidences.csv")).unwrap();
    assert!(csv.starts_with("# tpxspec "));
}

#[test]
fn empty_coincidence_window_warns_and_succeeds() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrated(tmp.path());
    let argon = cal.parent().unwrap();
    let out = tpxspec(&[
        "analyze",
        "--out",
        s(argon),
        "--set",
        "coinc.window_ns=0.001",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let summary = json(&argon.join("summary.json"));
    assert_eq!(summary["coincidence"]["n_coincidences"], 0);
    assert!(!summary["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn report_orders_pump_centrals_by_power() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("report");
    let stdout = ok(&["report", "--out", s(&dir)]);
    assert!(
        stdout.contains("pump central increasing with power: true"),
        "{stdout}"
    );
    let report = json(&dir.join("report.json"));
    assert_eq!(report["pump_central_increasing"], true);
    assert_eq!(report["settings"].as_array().unwrap().len(), 3);
    assert!(dir.join("pump_trend.svg").exists());
    assert!(dir.join("spdc-100mw").join("summary.json").exists());
}

#[test]
fn selftest_runs_a_single_criterion() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(&["selftest", "6", "--out", s(tmp.path())]);
    assert!(stdout.starts_with("criterion 6 [PASS]"), "{stdout}");
    let out = tpxspec(&["selftest", "12", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn ldd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldd"))
        .args(args)
        .env_remove("LDD_LOG")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// The bump scenario shrunk to an 8×4 mesh and two steps.
fn small_bump(dir: &Path, extra: &str) -> PathBuf {
    let src = fs::read_to_string(scenario("two_layer_bump.ini")).unwrap();
    let cfg = src
        .replace("nx = 16", "nx = 8")
        .replace("ny = 8", "ny = 4")
        .replace("split_index = 8", "split_index = 4")
        .replace("T = 0.015", "T = 0.01")
        .replace("N = 3", "N = 2")
        .replace("formats = csv, vtk", "formats = csv")
        .replace("verbosity = info", "verbosity = warn");
    let path = dir.join("bump.ini");
    fs::write(&path, format!("{cfg}{extra}")).unwrap();
    path
}

#[test]
fn constant_scenario_writes_all_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = ldd(&["run", scenario("constant.ini").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let fields = (0..=4).filter(|n| out.join(format!("fields_{n:04}.csv")).exists()).count();
    assert_eq!(fields, 5);
    assert!(!out.join("fields_0005.csv").exists());
    for f in ["manifest.txt", "admissibility.txt", "convergence.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let last = fs::read_to_string(out.join("fields_0004.csv")).unwrap();
    for row in last.lines().skip(1) {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cols[3], cols[4]), (1.0, 1.5));
    }
}

#[test]
fn manifest_precedes_field_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = ldd(&["run", scenario("constant.ini").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let mtime = |f: &str| fs::metadata(out.join(f)).unwrap().modified().unwrap();
    assert!(mtime("manifest.txt") <= mtime("fields_0000.csv"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("| case = constant"));
    assert!(manifest.contains("layer1.L_S"));
}

#[test]
fn nx_zero_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, fs::read_to_string(scenario("constant.ini")).unwrap().replace("nx = 8", "nx = 0")).unwrap();
    let o = ldd(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("geometry.nx") && err.contains("line"), "{err}");
}

#[test]
fn oversized_step_is_rejected_without_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bump(dir.path(), "");
    let src = fs::read_to_string(&cfg).unwrap().replace("T = 0.01", "T = 1");
    fs::write(&cfg, src).unwrap();
    let o = ldd(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = text(&o.stderr);
    assert!(err.contains("C = ") && err.contains("tau_max"), "{err}");
    assert!(dir.path().join("o/admissibility.txt").exists());
}

#[test]
fn check_prints_example_values() {
    let o = ldd(&["check", scenario("check_example.ini").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = text(&o.stdout);
    assert!(out.contains("C = 0.3"), "{out}");
    assert!(out.contains("tau_max = 0.25"), "{out}");
    assert!(out.contains("suggested L = 2"), "{out}");
    assert!(out.contains("L = (w 2, g 2)"), "{out}");
}

#[test]
fn check_failing_parameter_condition() {
    let o = ldd(&["check", scenario("small_L.ini").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = text(&o.stderr);
    assert!(err.contains("FAIL") && err.contains("increase L"), "{err}");
}

#[test]
fn small_l_run_records_stagnation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ldd(&["run", scenario("small_L.ini").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", text(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("failure = NonConvergence"));
    let log = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 300 * 4);
    assert!(fs::read_to_string(out.join("admissibility.txt")).unwrap().contains("parameter_pass = false"));
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bump(dir.path(), "");
    let mut contents = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = ldd(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        contents.push(files);
    }
    assert_eq!(contents[0].len(), 4);
    assert_eq!(contents[0], contents[1]);
}

#[test]
fn verify_constant_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldd(&["verify", "--case", "constant", "--levels", "4,8", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("verify_constant.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,h,tau,L2_w,L2_g,H1_w,H1_g,jump,flux_mismatch,order_estimates");
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        for c in &cols[3..7] {
            assert!(c.parse::<f64>().unwrap() <= 1e-10, "{row}");
        }
    }
}

#[test]
fn verify_broken_source_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldd(&[
        "verify",
        "--case",
        "constant",
        "--levels",
        "4",
        "--break-source",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(6), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("FAIL"));
}

#[test]
fn verify_unknown_case_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldd(&["verify", "--case", "nonesuch", "--levels", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("nonesuch"));
}

#[test]
fn config_verbosity_enables_info_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bump(dir.path(), "");
    let src = fs::read_to_string(&cfg).unwrap().replace("verbosity = warn", "verbosity = info");
    fs::write(&cfg, src).unwrap();
    let o = ldd(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(text(&o.stderr).contains("converged in"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funscreen_core::data::{format_csv, write_curve_matrix, write_design, CurveEnsemble};
use funscreen_core::validation::{make_linear_benchmark, make_manifold_benchmark, ManifoldKind};

fn funscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funscreen"))
        .args(args)
        .env_remove("FUNSCREEN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = funscreen(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).trim().to_string();
    assert_eq!(s.lines().count(), 1, "expected one error line, got {s:?}");
    s
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}

/// Inputs and curves of a small roll benchmark written as CSV files.
fn roll_files(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let b = make_manifold_benchmark(n, 3, 20, 5, ManifoldKind::Roll).unwrap();
    let (x, y) = (dir.join("inputs.csv"), dir.join("curves.csv"));
    write_design(&x, &b.design).unwrap();
    write_curve_matrix(&y, &b.curves).unwrap();
    (x, y)
}

#[test]
fn doe_builds_the_64_run_resolution_iv_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("doe");
    ok(&["doe", "--p", "31", "--resolution", "4", "--out", p(&out)]);
    let text = fs::read_to_string(out.join("design.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 31);
    assert_eq!((header[0], header[30]), ("V1", "V31"));
    assert_eq!(lines.count(), 64);
    let summary = fs::read_to_string(out.join("generators.txt")).unwrap();
    assert!(summary.contains("resolution=IV"));
    let manifest = fs::read_to_string(out.join("run-manifest.txt")).unwrap();
    assert!(manifest.contains("config.seed=0"));
    assert!(manifest.contains("artifact.design.csv="));
}

#[test]
fn lhs_design_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lhs");
    ok(&["doe", "--method", "lhs", "--runs", "20", "--p", "3", "--iterations", "500", "--out", p(&out)]);
    assert_eq!(data_rows(&out.join("design.csv")).len(), 20);
    let trace: Vec<f64> = data_rows(&out.join("discrepancy.csv"))
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn screening_ranks_the_dominant_factor_first() {
    let dir = tempfile::tempdir().unwrap();
    let b = make_linear_benchmark(32, 5, 40, 8).unwrap();
    let (x, y) = (dir.path().join("design.csv"), dir.path().join("curves.csv"));
    write_design(&x, &b.design).unwrap();
    write_curve_matrix(&y, &b.curves).unwrap();
    let out = dir.path().join("screen");
    ok(&["screen", "--design", p(&x), "--curves", p(&y), "--x-percent", "100", "--out", p(&out)]);
    let top = (0..b.gsi.len()).max_by(|&i, &j| b.gsi[i].total_cmp(&b.gsi[j])).unwrap();
    let first = data_rows(&out.join("gsi.csv"))[0].clone();
    assert_eq!(first.split(',').nth(1).unwrap(), format!("V{}", top + 1));
    for name in ["si.csv", "dynamic_r2.csv", "eigen.csv", "correlations.csv", "dynamic_r2.svg"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn fit_then_predict_reproduces_validation_folds() {
    let dir = tempfile::tempdir().unwrap();
    let b = make_manifold_benchmark(60, 3, 20, 5, ManifoldKind::Roll).unwrap();
    let (x, y) = roll_files(dir.path(), 60);
    let val = dir.path().join("val");
    ok(&[
        "validate", "--inputs", p(&x), "--curves", p(&y), "--folds", "5", "--seed", "3", "--compare", "false",
        "--out", p(&val),
    ]);
    let folds: Vec<usize> = data_rows(&val.join("folds.csv"))
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let cv_rows = data_rows(&val.join("predictions.csv"));

    let test: Vec<usize> = (0..60).filter(|&i| folds[i] == 2).collect();
    let train: Vec<usize> = (0..60).filter(|&i| folds[i] != 2).collect();
    let names = b.design.column_names().to_vec();
    let grid: Vec<String> = b.curves.time_grid().iter().map(|t| t.to_string()).collect();
    let xv = b.design.values();
    let (tx, ty, qx) = (dir.path().join("tx.csv"), dir.path().join("ty.csv"), dir.path().join("qx.csv"));
    fs::write(&tx, format_csv(Some(&names), &xv.select_rows(train.iter()))).unwrap();
    fs::write(&ty, format_csv(Some(&grid), &b.curves.values().select_rows(train.iter()))).unwrap();
    fs::write(&qx, format_csv(Some(&names), &xv.select_rows(test.iter()))).unwrap();

    let fit = dir.path().join("fit");
    ok(&["fit", "--inputs", p(&tx), "--curves", p(&ty), "--seed", "3", "--out", p(&fit)]);
    assert!(fit.join("model/manifest.txt").exists() && fit.join("labels.csv").exists());
    let pred = dir.path().join("pred");
    ok(&["predict", "--model", p(&fit), "--inputs", p(&qx), "--out", p(&pred)]);
    let rows = data_rows(&pred.join("predictions.csv"));
    for (r, &i) in test.iter().enumerate() {
        assert_eq!(rows[r], cv_rows[i], "run {i}");
    }
}

#[test]
fn validate_overlays_the_three_reducers() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = roll_files(dir.path(), 50);
    let out = dir.path().join("val");
    ok(&["validate", "--inputs", p(&x), "--curves", p(&y), "--folds", "5", "--out", p(&out)]);
    let svg = fs::read_to_string(out.join("q2.svg")).unwrap();
    for legend in ["PCA (solid)", "RML (dashed)", "FkNN (dotted)"] {
        assert!(svg.contains(legend), "{legend}");
    }
    assert!(svg.contains("<!-- data\nx,PCA,RML,FkNN\n"));
    let header = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(header.starts_with("time,q2_pca,q2_rml,q2_fknn\n"));
    assert_eq!(data_rows(&out.join("validation.csv")).len(), 20);
}

#[test]
fn reruns_are_byte_identical_and_verified() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = roll_files(dir.path(), 40);
    let out = dir.path().join("fit");
    let args = ["fit", "--inputs", p(&x), "--curves", p(&y), "--seed", "11", "--out", p(&out)];
    ok(&args);
    let first = fs::read(out.join("model/manifest.txt")).unwrap();
    let manifest = fs::read(out.join("run-manifest.txt")).unwrap();
    ok(&args);
    assert_eq!(fs::read(out.join("model/manifest.txt")).unwrap(), first);
    assert_eq!(fs::read(out.join("run-manifest.txt")).unwrap(), manifest);

    let other = dir.path().join("fit2");
    ok(&["fit", "--inputs", p(&x), "--curves", p(&y), "--seed", "11", "--out", p(&other)]);
    for f in ["labels.csv", "model/manifest.txt", "model/scaler.min.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(other.join(f)).unwrap(), "{f}");
    }

    fs::write(out.join("labels.csv"), "run,cluster\n").unwrap();
    let o = funscreen(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("error: kind=checksum "));

    let pred = dir.path().join("pred");
    let o = funscreen(&["predict", "--model", p(&out), "--inputs", p(&x), "--out", p(&pred)]);
    assert!(stderr_line(&o).starts_with("error: kind=checksum "));
    assert!(!pred.exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("doe");
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, format!("# design\np = 7\nresolution = 4\nseed = 1\nout = {}\n", p(&out))).unwrap();
    ok(&["--config", p(&cfg), "doe", "--seed", "5"]);
    let manifest = fs::read_to_string(out.join("run-manifest.txt")).unwrap();
    assert!(manifest.contains("config.seed=5"));
    assert!(manifest.contains("config.p=7"));
    assert_eq!(data_rows(&out.join("design.csv")).len(), 16);
}

#[test]
fn unknown_keys_are_rejected_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "p = 5\nbogus = 1\nalso_bogus = 2\n").unwrap();
    let o = funscreen(&["--config", p(&cfg), "doe", "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let line = stderr_line(&o);
    assert!(line.starts_with("error: kind=config message="));
    assert!(line.contains("bogus") && line.contains("also_bogus"));

    let o = funscreen(&["doe", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("error: kind=usage message="));
}

#[test]
fn failures_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = roll_files(dir.path(), 30);
    let short = dir.path().join("short.csv");
    let b = make_manifold_benchmark(10, 3, 20, 5, ManifoldKind::Roll).unwrap();
    write_curve_matrix(&short, &b.curves).unwrap();
    let out = dir.path().join("fit");
    let o = funscreen(&["fit", "--inputs", p(&x), "--curves", p(&short), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("error: kind=shape "));
    assert!(!out.exists());
    let leftovers: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains("staging"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");

    let o = funscreen(&["screen", "--design", p(&dir.path().join("missing.csv")), "--curves", p(&x), "--out", p(&out)]);
    assert!(stderr_line(&o).starts_with("error: kind=config "));
}

#[test]
fn thread_cap_is_read_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("doe");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_funscreen"))
            .args(["doe", "--p", "6", "--out", p(&out)])
            .env("FUNSCREEN_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    let o = run("zero");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("FUNSCREEN_THREADS"));
}

#[test]
fn curves_round_trip_through_the_csv_dialect() {
    let dir = tempfile::tempdir().unwrap();
    let (_, y) = roll_files(dir.path(), 12);
    let c = funscreen_core::data::load_curve_matrix(&y, true).unwrap();
    let again = dir.path().join("again.csv");
    write_curve_matrix(&again, &CurveEnsemble::new(c.values().clone(), Some(c.time_grid().to_vec())).unwrap()).unwrap();
    assert_eq!(fs::read(&y).unwrap(), fs::read(&again).unwrap());
}

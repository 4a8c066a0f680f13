use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccspline(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ccspline"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn gram_reports_tridiagonal_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ccspline(&["gram", "--grid", "0.1:0.1:4", "--out-dir", out]);
    let s = json(&dir.path().join("gram_summary.json"));
    assert_eq!(s["n"], 40);
    assert!(s["inverse_nnz"].as_u64().unwrap() <= 3 * 40);
    assert!(s["identity_residual_fro"].as_f64().unwrap() <= 1e-8);
    assert!(s["log_det"].as_f64().unwrap().is_finite());
    for f in [
        "gram.csv",
        "inverse.csv",
        "inverse_coo.csv",
        "p_coo.csv",
        "sparsity.txt",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let sparsity = fs::read_to_string(dir.path().join("sparsity.txt")).unwrap();
    assert_eq!(sparsity.lines().count(), 40);
}

#[test]
fn gram_accepts_a_kernel_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tc.json");
    fs::write(&cfg, r#"{"type":"tc","beta":2.0,"alpha":0.5}"#).unwrap();
    ccspline(&[
        "gram",
        "--grid",
        "0.5,1,1.5,2",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let s = json(&dir.path().join("gram_summary.json"));
    // TC Gram on an increasing grid: det = Π (c_i - c_{i+1}) · c_n.
    let c: Vec<f64> = [0.5f64, 1.0, 1.5, 2.0]
        .iter()
        .map(|t| 2.0 * (-0.5 * t).exp())
        .collect();
    let expect = (c[0] - c[1]).ln() + (c[1] - c[2]).ln() + (c[2] - c[3]).ln() + c[3].ln();
    assert!((s["log_det"].as_f64().unwrap() - expect).abs() <= 1e-12);
}

#[test]
fn spectral_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    ccspline(&[
        "spectral",
        "--grid",
        "0.25:0.25:2",
        "--max-terms",
        "20",
        "--plot",
        "0:0.5:5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let trunc = csv_rows(&dir.path().join("truncation.csv"));
    assert_eq!(trunc[0], vec!["M", "fro_error"]);
    let errs: Vec<f64> = trunc[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(errs.len(), 5);
    assert!(errs.windows(2).all(|w| w[1] <= w[0]));
    let eig = csv_rows(&dir.path().join("eigenfunctions.csv"));
    assert_eq!(eig.len(), 1 + 11);
    assert_eq!(eig[0].len(), 1 + 3);
    assert!(dir.path().join("measure.csv").exists());
}

#[test]
fn maxent_sampling_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ccspline(&[
            "maxent-sample",
            "--paths",
            "200",
            "--seed",
            "7",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
    }
    let pa = fs::read(a.path().join("paths.csv")).unwrap();
    assert_eq!(pa, fs::read(b.path().join("paths.csv")).unwrap());
    let rows = csv_rows(&a.path().join("paths.csv"));
    assert_eq!(rows[0], vec!["instant", "path_id", "value"]);
    assert_eq!(rows.len(), 1 + 200 * 15);
    let cov = csv_rows(&a.path().join("covariance.csv"));
    let gram = csv_rows(&a.path().join("gram.csv"));
    assert_eq!(cov.len(), gram.len());
}

#[test]
fn estimate_fixed_kernel_and_tuned_family() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut s = String::from("t,y\n");
    for k in 1..=30 {
        let t = 0.2 * k as f64;
        let wiggle = 1e-3 * ((k * 37 % 11) as f64 - 5.0);
        s.push_str(&format!(
            "{t},{}\n",
            0.5 * ((-t).exp() - (-3.0 * t).exp()) + wiggle
        ));
    }
    fs::write(&data, s).unwrap();

    let fixed = dir.path().join("fixed.json");
    fs::write(
        &fixed,
        r#"{"kernel":{"type":"tc","beta":0.1,"alpha":1.0},"noise_variance":1e-4}"#,
    )
    .unwrap();
    let out_fixed = dir.path().join("fixed");
    ccspline(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--config",
        fixed.to_str().unwrap(),
        "--out-dir",
        out_fixed.to_str().unwrap(),
    ]);
    let model = json(&out_fixed.join("model.json"));
    assert_eq!(model["coefficients"].as_array().unwrap().len(), 30);
    let fitted = csv_rows(&out_fixed.join("fitted.csv"));
    assert_eq!(fitted[0], vec!["t", "y", "y_hat"]);
    for r in &fitted[1..] {
        let (y, yh): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((y - yh).abs() < 0.05);
    }

    let tuned = dir.path().join("tuned.json");
    fs::write(&tuned, r#"{"family":{"type":"proposed_two_pole"}}"#).unwrap();
    let out_tuned = dir.path().join("tuned");
    ccspline(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--config",
        tuned.to_str().unwrap(),
        "--noise-variance",
        "1e-5",
        "--out-dir",
        out_tuned.to_str().unwrap(),
    ]);
    let model = json(&out_tuned.join("model.json"));
    assert_eq!(model["kernel"]["type"], "coordinate_change");
}

#[test]
fn estimate_without_config_fails() {
    let out = Command::new(env!("CARGO_BIN_EXE_ccspline"))
        .args(["estimate", "--data", "missing.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn small_experiment_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, threads) in [(&a, "1"), (&b, "2")] {
        let out = ccspline(&[
            "experiment",
            "--realizations",
            "3",
            "--threads",
            threads,
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("proposed-eb"));
        assert!(text.contains("p = "));
    }
    for f in [
        "boxplot.csv",
        "theta.csv",
        "summary.json",
        "curves_tc-oracle.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let s = json(&a.path().join("summary.json"));
    assert_eq!(s["realizations"], 3);
}

#[test]
fn printed_config_matches_checked_in_file() {
    let out = ccspline(&["experiment", "--print-config"]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper-sec7.json");
    assert_eq!(printed, json(&path));
}

#[test]
fn seed_flag_overrides_config() {
    let out = ccspline(&["experiment", "--print-config", "--seed", "42"]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["seed"], 42);
}

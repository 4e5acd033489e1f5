use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use herdlab::manifest::RunManifest;

fn herdlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herdlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("HERDLAB_OUT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = herdlab(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    herdlab(dir, args).status.code().unwrap()
}

fn small_fixture(dir: &Path) {
    ok(dir, &["fixtures", "--kind", "nyse-like", "--seed", "4", "--rows", "400", "--out", "fx"]);
}

const SMALL: [&str; 6] = ["--days", "120", "--burn-in", "50", "--agents", "15000"];

#[test]
fn calibrate_writes_params_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fixture(d);
    let summary = ok(d, &["calibrate", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--out", "params.json"]);
    assert!(summary.contains("H_M"));
    let params = herdlab::ModelParams::from_json(&fs::read_to_string(d.join("params.json")).unwrap()).unwrap();
    assert_eq!(params.n_stocks, 150);
    assert_eq!(params.t_out, 399);
    assert!((params.h_market - 0.363).abs() < 0.05);
    assert!(d.join("params.summary.txt").exists());

    // --p recomputes P
    ok(d, &["calibrate", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--out", "p2.json", "--p", "0.004"]);
    let p2 = herdlab::ModelParams::from_json(&fs::read_to_string(d.join("p2.json")).unwrap()).unwrap();
    assert_eq!(p2.p_individual, 0.004);
    let expect = 1.0 - (1.0 - 0.004f64).powf(150.0 * p2.h_market);
    assert!((p2.p_group - expect).abs() < 1e-9);

    let json = ok(d, &["--format", "json", "calibrate", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--out", "p3.json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["P"].as_f64().unwrap() > 0.3);
}

#[test]
fn calibrate_reports_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fixture(d);
    let text = fs::read_to_string(d.join("fx/sectors.csv")).unwrap();
    fs::write(d.join("blank.csv"), text.replacen("sector1", "", 1)).unwrap();
    let out = herdlab(d, &["calibrate", "--prices", "fx/prices.csv", "--sectors", "blank.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty sector label"));

    // Sector b holds two mirror-image stocks, so it never co-moves.
    let mut prices = String::from("date,A,B,C,D\n");
    let (mut x, mut y) = (0.0f64, 0.0f64);
    for (t, date) in herdlab::fixtures::business_days(40).iter().enumerate() {
        x += ((t * 7 % 5) as f64 - 2.0) * 0.01;
        y += ((t * 3 % 7) as f64 - 3.0) * 0.01;
        prices += &format!("{date},{},{},{},{}\n", x.exp(), x.exp(), y.exp(), (-y).exp());
    }
    fs::write(d.join("mirror.csv"), prices).unwrap();
    fs::write(d.join("mirror_sectors.csv"), "ticker,sector\nA,a\nB,a\nC,b\nD,b\n").unwrap();
    let out = herdlab(d, &["calibrate", "--prices", "mirror.csv", "--sectors", "mirror_sectors.csv"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sector b"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("calibrate").exists());
}

#[test]
fn simulate_is_deterministic_and_bounded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut a = vec!["simulate", "--seed", "1", "--out", "a"];
    a.extend(SMALL);
    ok(d, &a);
    let mut b = vec!["--threads", "3", "simulate", "--seed", "1", "--out", "b"];
    b.extend(SMALL);
    ok(d, &b);
    let ma = RunManifest::from_json(&fs::read_to_string(d.join("a/manifest.json")).unwrap()).unwrap();
    let mb = RunManifest::from_json(&fs::read_to_string(d.join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.seed, Some(1));
    assert_eq!(ma.sources["T_out"], "cli");
    assert_eq!(ma.sources["H_M"], "default");
    assert_eq!(fs::read(d.join("a/returns.csv")).unwrap(), fs::read(d.join("b/returns.csv")).unwrap());

    let panel = herdlab::data::read_returns_csv(&d.join("a/returns.csv"), &d.join("a/sectors.csv"), None).unwrap();
    assert_eq!(panel.kind(), herdlab::ReturnKind::SimulatedCount);
    assert_eq!((panel.n_days(), panel.n_stocks()), (120, 150));
    // agents per stock average 100; no stock can move more than it holds
    assert!(panel.columns().iter().flatten().all(|r| r.abs() <= 15000.0 && r.fract() == 0.0));

    let mut c = vec!["simulate", "--seed", "2", "--out", "c"];
    c.extend(SMALL);
    ok(d, &c);
    assert_ne!(fs::read(d.join("a/returns.csv")).unwrap(), fs::read(d.join("c/returns.csv")).unwrap());
}

#[test]
fn params_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut p = herdlab::ModelParams::hkse();
    p.burn_in = 7;
    fs::write(d.join("p.json"), p.to_json().unwrap()).unwrap();
    ok(d, &["simulate", "--params", "p.json", "--days", "5", "--agents", "3000", "--out", "s"]);
    let m = RunManifest::from_json(&fs::read_to_string(d.join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.config["params"]["burn_in"], 7);
    assert_eq!(m.config["params"]["H_M"], 0.306);
    assert_eq!(m.config["params"]["T_out"], 5);
    assert_eq!(m.sources["burn_in"], "params-file");
    assert_eq!(m.sources["N"], "cli");
    assert_eq!(m.inputs.len(), 1);
}

#[test]
fn usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["simulate", "--days", "0"]), 2);
    assert_eq!(code(d, &["simulate", "--population-mode", "sometimes"]), 2);
    assert_eq!(code(d, &["fixtures", "--kind", "nasdaq"]), 2);
    assert_eq!(code(d, &["analyze", "--sectors", "x.csv"]), 2);
    assert_eq!(code(d, &["--threads", "0", "fixtures", "--kind", "noise"]), 2);
    // N not divisible by n in uniform mode
    assert_eq!(code(d, &["simulate", "--agents", "1001", "--days", "3", "--population-mode", "uniform"]), 2);
    assert_eq!(code(d, &["--version"]), 0);
    assert!(!d.join("simulate").exists());
}

#[test]
fn analyze_prices_and_returns() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fixture(d);
    let text = ok(d, &["analyze", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--out", "an", "--max-lag", "20"]);
    assert!(text.contains("largest eigenvalues"));
    for f in ["report.json", "A.csv", "eigvec_0.csv", "eigvec_1.csv", "eigvec_2.csv", "eighist.csv", "manifest.json"] {
        assert!(d.join("an").join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("an/report.json")).unwrap()).unwrap();
    let eig: Vec<f64> = report["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 150);
    assert!((eig.iter().sum::<f64>() - 150.0).abs() < 1e-6);
    assert_eq!(report["A"].as_array().unwrap().len(), 21);
    let hist = fs::read_to_string(d.join("an/eighist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 51);

    // JSON format skips the plot tables
    ok(d, &["--format", "json", "analyze", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--out", "aj"]);
    assert!(d.join("aj/report.json").exists());
    assert!(!d.join("aj/A.csv").exists());

    // a two-stock toy panel has two eigenvalues summing to 2
    fs::write(d.join("toy.csv"), "t,X,Y\n1,1,2\n2,-1,0.5\n3,0.3,-1\n4,2,1\n").unwrap();
    fs::write(d.join("toy_sectors.csv"), "ticker,sector\nX,a\nY,a\n").unwrap();
    ok(d, &["analyze", "--returns", "toy.csv", "--sectors", "toy_sectors.csv", "--out", "toy", "--max-lag", "2"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("toy/report.json")).unwrap()).unwrap();
    let eig: Vec<f64> = report["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 2);
    assert!((eig[0] + eig[1] - 2.0).abs() < 1e-12);
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fixture(d);
    let mut args = vec!["pipeline", "--prices", "fx/prices.csv", "--sectors", "fx/sectors.csv", "--seeds", "1..3", "--out", "pl"];
    args.extend(SMALL);
    ok(d, &args);
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("pl/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["seeds"], serde_json::json!([1, 2, 3]));
    let l0 = &agg["statistics"]["lambda_0"];
    let values: Vec<f64> = l0["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 3);
    let mean = values.iter().sum::<f64>() / 3.0;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((l0["mean"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!((l0["std"].as_f64().unwrap() - std).abs() < 1e-9);
    assert!(l0["input"].as_f64().unwrap() > 1.0);
    for s in 1..=3 {
        let m = RunManifest::from_json(&fs::read_to_string(d.join(format!("pl/seed-{s}/manifest.json"))).unwrap()).unwrap();
        assert_eq!(m.seed, Some(s));
        assert!(m.outputs.contains_key("returns.csv"));
    }
    assert!(d.join("pl/empirical/report.json").exists());
}

#[test]
fn pipeline_errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fixture(d);
    let out = herdlab(d, &["pipeline", "--prices", "fx/prices.csv", "--sectors", "missing.csv", "--out", "pl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage 1 (load)"));
    assert!(!d.join("pl").exists());
}

#[test]
fn fixtures_are_reproducible_and_default_out_follows_env() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["fixtures", "--kind", "noise", "--seed", "9", "--rows", "300", "--out", "n1"]);
    let status = Command::new(env!("CARGO_BIN_EXE_herdlab"))
        .args(["fixtures", "--kind", "noise", "--seed", "9", "--rows", "300"])
        .current_dir(d)
        .env("HERDLAB_OUT", d.join("envout"))
        .status()
        .unwrap();
    assert!(status.success());
    let a = RunManifest::from_json(&fs::read_to_string(d.join("n1/manifest.json")).unwrap()).unwrap();
    let b = RunManifest::from_json(&fs::read_to_string(d.join("envout/fixtures/manifest.json")).unwrap()).unwrap();
    assert_eq!(a.outputs, b.outputs);
    let info: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("n1/fixture.json")).unwrap()).unwrap();
    assert!(info["measured"]["market"].as_f64().unwrap() < 0.1);
}

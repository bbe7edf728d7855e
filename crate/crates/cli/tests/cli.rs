use std::path::Path;
use std::process::{Command, Output};

fn afcs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afcs"))
        .args(args)
        .current_dir(dir)
        .env("AFCS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn weights_json_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = afcs(&["weights", "--size", "6", "--seed", "4", "--verify", "--out", "w.json"], dir.path());
    assert!(out.status.success());
    let v = json(&dir.path().join("w.json"));
    assert_eq!(v["weights"].as_array().unwrap().len(), 6);
    assert_eq!(v["verified"], true);
    assert_eq!(v["epsilon"], 1e-9);
}

#[test]
fn encode_then_decode_sv_recovers_signal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = afcs(
        &["encode", "--n", "300", "--m", "90", "--L", "10", "--sparsity", "15", "--seed", "7", "--out", "b.json", "--graph-out", "g.json"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = afcs(
        &["decode-sv", "--graph", "g.json", "--measurements", "b.json", "--T", "2", "--out", "r.json"],
        d,
    );
    assert!(out.status.success());
    let bundle = json(&d.join("b.json"));
    let result = json(&d.join("r.json"));
    assert_eq!(result["status"], "complete");
    assert_eq!(result["signal"], bundle["signal"]);
}

#[test]
fn strict_decode_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Far too few measurements to resolve everything.
    assert!(afcs(&["encode", "--n", "300", "--m", "5", "--L", "10", "--sparsity", "30", "--out", "b.json"], d)
        .status
        .success());
    let lax = afcs(&["decode-sv", "--graph", "b.json", "--measurements", "b.json", "--T", "1"], d);
    assert_eq!(lax.status.code(), Some(0));
    let strict = afcs(&["decode-sv", "--graph", "b.json", "--measurements", "b.json", "--T", "1", "--strict"], d);
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn decode_bp_reads_sigma_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(afcs(
        &["encode", "--n", "200", "--m", "80", "--L", "8", "--sparsity", "10", "--snr-db", "40", "--out", "y.json"],
        d
    )
    .status
    .success());
    let out = afcs(&["decode-bp", "--graph", "y.json", "--measurements", "y.json", "--prior", "0.05", "--out", "p.json"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let post = json(&d.join("p.json"));
    let truth = json(&d.join("y.json"));
    assert_eq!(post["hard_decision"], truth["signal"]);
    assert_eq!(post["posterior_one"].as_array().unwrap().len(), 200);
}

#[test]
fn analyze_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = afcs(&["analyze", "de", "--L", "25", "--T", "1", "--s", "0.1", "--beta", "0.2", "--static-q"], d);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("iter,p,f,q1"));
    assert!(text.lines().count() > 2);

    let out = afcs(&["analyze", "bounds", "--n", "1000", "--s", "0.1", "--T", "0"], d);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("10,100,272,"));

    let out = afcs(&["analyze", "lopt", "--T", "0", "--s", "1.5"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wsn_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = afcs(
        &["wsn", "--sensors", "64", "--decoder", "sv", "--active", "5", "--trials", "4", "--seed", "3", "--out", "m.csv"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("trial,pcd,pfd,unresolved"));
    assert_eq!(text.lines().count(), 5);

    let bad = afcs(&["wsn", "--sensors", "60", "--deploy", "uniform", "--trials", "2"], d);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn experiment_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"experiment":"fig6","grid":{"L":[2],"T":[3]}}"#).unwrap();
    let out = afcs(&["experiment", "--config", "bad.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T=3 exceeds L=2"));

    let out = Command::new(env!("CARGO_BIN_EXE_afcs"))
        .args(["analyze", "lopt", "--T", "1", "--s", "0.1"])
        .env("AFCS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_is_reproducible_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"experiment":"fig6","grid":{"n":[200],"s":[0.05],"L":[10],"T":[1],"beta":[0.2,0.3]},"trials":5,"seed":11}"#;
    std::fs::write(d.join("c.json"), cfg).unwrap();
    assert!(afcs(&["experiment", "--config", "c.json", "--out", "a.csv"], d).status.success());
    let two = Command::new(env!("CARGO_BIN_EXE_afcs"))
        .args(["experiment", "--config", "c.json", "--out", "b.csv"])
        .current_dir(d)
        .env("AFCS_THREADS", "2")
        .output()
        .unwrap();
    assert!(two.status.success());
    let a = std::fs::read(d.join("a.csv")).unwrap();
    let b = std::fs::read(d.join("b.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 3);
    let manifest = json(&d.join("a.csv.manifest.json"));
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["rows"], 2);
}

#[test]
fn empty_grid_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("e.json"), r#"{"experiment":"custom"}"#).unwrap();
    let out = afcs(&["experiment", "--config", "e.json"], d);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use spherebot_cli::artifacts::{read_manifest, read_metrics, Manifest};
use spherebot_core::RobotParams;

fn spherebot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spherebot")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn params_file(dir: &Path, params: RobotParams) -> PathBuf {
    let file = dir.join("params.json");
    fs::write(&file, params.to_json_string()).unwrap();
    file
}

fn check_hashes(dir: &Path, manifest: &Manifest) {
    for f in &manifest.files {
        let bytes = fs::read(dir.join(&f.name)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.name);
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256, "{}", f.name);
    }
}

#[test]
fn shipped_parameter_file_is_the_default_robot() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../params/default.json");
    assert_eq!(RobotParams::from_json_file(file).unwrap(), RobotParams::default());
}

#[test]
fn simulate_writes_a_reproducible_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = spherebot(&["simulate", "--out", path(out), "--duration", "6", "--beta-deg", "10", "--speed", "-5"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (da, db) = (a.join("simulate"), b.join("simulate"));
    for name in ["run.csv", "metrics.json", "manifest.json"] {
        assert!(da.join(name).is_file(), "{name} missing");
    }
    let (ma, mb) = (read_manifest(&da).unwrap(), read_manifest(&db).unwrap());
    check_hashes(&da, &ma);
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.files, mb.files);
    for f in &ma.files {
        assert_eq!(fs::read(da.join(&f.name)).unwrap(), fs::read(db.join(&f.name)).unwrap(), "{}", f.name);
    }

    let metrics = read_metrics(&da).unwrap();
    let run = &metrics.runs[0];
    assert!(run.ok && run.t_end >= 6.0 - 1e-9);
    assert!(run.max_constraint_residual.unwrap() < 1e-6);
    assert_eq!(run.trajectory_file.as_deref(), Some("run.csv"));

    // A different operating point is a different configuration.
    let c = tmp.path().join("c");
    assert_eq!(code(&spherebot(&["simulate", "--out", path(&c), "--duration", "6", "--beta-deg", "12", "--speed", "-5"])), 0);
    assert_ne!(read_manifest(&c.join("simulate")).unwrap().config_hash, ma.config_hash);
}

#[test]
fn analyze_recovers_the_circle_from_a_written_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spherebot(&["simulate", "--out", path(tmp.path()), "--duration", "20", "--beta-deg", "15", "--speed", "-10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = tmp.path().join("simulate/run.csv");
    let o = spherebot(&["analyze", path(&csv), "--beta-deg", "15", "--speed", "-10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["beta_deg"], 15.0);
    let (meas, pred) = (&v["measured"], &v["predicted"]);
    let rel = |k: &str| (meas[k].as_f64().unwrap() - pred[k].as_f64().unwrap()).abs() / pred[k].as_f64().unwrap().abs();
    assert!(rel("frequency_rad_s") < 0.05, "{meas} vs {pred}");
    assert!(rel("radius_m") < 0.10, "{meas} vs {pred}");
    assert!(v["max_constraint_residual"].as_f64().unwrap() < 1e-6);

    assert_eq!(code(&spherebot(&["analyze", path(&tmp.path().join("nope.csv"))])), 2);
}

#[test]
fn report_needs_artifacts_and_checks_their_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spherebot(&["report", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no scenario artifacts"));

    assert_eq!(code(&spherebot(&["simulate", "--out", path(tmp.path()), "--duration", "4", "--beta-deg", "0", "--speed", "-2"])), 0);
    let o = spherebot(&["report", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS simulate"));
    assert!(tmp.path().join("report.json").is_file());

    let csv = tmp.path().join("simulate/run.csv");
    let mut bytes = fs::read(&csv).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&csv, bytes).unwrap();
    assert_eq!(code(&spherebot(&["report", "--out", path(tmp.path())])), 2);

    fs::remove_file(tmp.path().join("simulate/manifest.json")).unwrap();
    assert_eq!(code(&spherebot(&["report", "--out", path(tmp.path())])), 2);
}

#[test]
fn validation_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path());
    for args in [
        vec!["simulate", "--out", out, "--duration", "-1"],
        vec!["simulate", "--out", out, "--beta-deg", "120"],
        vec!["simulate", "--out", out, "--scenario", "fig99"],
        vec!["characterize", "--out", out, "--scenario", "fig12"],
        vec!["control", "--out", out, "--gamma", "1.5"],
        vec!["simulate", "--out", out, "--params", "/no/such/params.json"],
    ] {
        let o = spherebot(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad = params_file(tmp.path(), RobotParams { r_p: 0.2, ..Default::default() });
    assert_eq!(code(&spherebot(&["simulate", "--out", out, "--params", path(&bad)])), 2);
}

#[test]
fn control_exit_code_follows_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    // The default robot's lean crosses a singular configuration of the
    // wobble term shortly after the controller takes over.
    let o = spherebot(&["control", "--out", path(&tmp.path().join("default")), "--duration", "8"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read_metrics(&tmp.path().join("default/control")).unwrap();
    assert!(!metrics.runs[0].ok && metrics.runs[0].numerical);
    assert_eq!(read_manifest(&tmp.path().join("default/control")).unwrap().failed_runs, ["run"]);

    let long = params_file(tmp.path(), RobotParams { r_p: 0.13, ..Default::default() });
    let o = spherebot(&["control", "--out", path(&tmp.path().join("long")), "--duration", "12", "--params", path(&long)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = &read_metrics(&tmp.path().join("long/control")).unwrap().runs[0];
    assert!(run.ok && run.t_end >= 12.0 - 1e-9);
}

#[test]
fn scenario_files_run_like_builtins() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("mine.json");
    fs::write(
        &file,
        r#"{"name":"mine","runs":[
            {"label":"slow","initial":{"beta_deg":5,"speed":-2},"source":{"kind":"hold"},"duration":3},
            {"label":"quiet","initial":{"beta_deg":5,"speed":-2},"source":{"kind":"hold"},"duration":3,"write_trajectory":false}
        ]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = spherebot(&["simulate", "--out", path(&out), "--scenario", path(&file)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("mine");
    assert!(dir.join("slow.csv").is_file());
    assert!(!dir.join("quiet.csv").exists());
    let m = read_metrics(&dir).unwrap();
    assert_eq!(m.runs.len(), 2);
    check_hashes(&dir, &read_manifest(&dir).unwrap());

    fs::write(&file, r#"{"name":"mine","runs":[]}"#).unwrap();
    assert_eq!(code(&spherebot(&["simulate", "--out", path(&out), "--scenario", path(&file)])), 2);
}

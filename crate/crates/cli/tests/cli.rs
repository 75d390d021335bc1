use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn muntzlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_muntzlab"));
    cmd.args(args).env_remove("MUNTZLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn muntzlab")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const RANK_ONE: &str = r#"{"sequence":{"kind":"explicit","values":[1]},"measure":{"kind":"atomic","atoms":[[0.5,1.0]]}}"#;

#[test]
fn analyze_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", RANK_ONE);
    let out = dir.path().join("out");
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    let op = r["spectral"]["op_norm"].as_f64().unwrap();
    assert!((op - 3f64.sqrt() / 2.0).abs() < 1e-9);
    let cert = &r["certificates"][0];
    assert_eq!(cert["status"], "ok");
    assert_eq!(cert["dominates_op_norm"], true);
    let csv = std::fs::read_to_string(out.join("singular_values.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn analyze_lebesgue_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"sequence":{"kind":"geometric","lambda1":1,"ratio":2,"count":12},"measure":{"kind":"lebesgue"},"certificates":[]}"#,
    );
    let out = dir.path().to_str().unwrap();
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", out, "--precision", "extended"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["config"]["precision"], "extended");
    for s in r["spectral"]["singular_values"].as_array().unwrap() {
        assert!((s.as_f64().unwrap() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn missing_measure_is_named_and_nothing_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"sequence":{"kind":"explicit","values":[1]}}"#);
    let out = dir.path().join("out");
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`measure`") && err.contains("line 1"), "{err}");
    assert!(!out.join("report.json").exists());
}

#[test]
fn invalid_truncation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", RANK_ONE);
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--n", "2"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("field `n`"));
}

#[test]
fn violated_hypothesis_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"sequence":{"kind":"geometric","lambda1":1,"ratio":2,"count":8},"measure":{"kind":"powertail","C":1,"alpha":2},"certificates":[{"kind":"psi"},{"kind":"rho","C":0.5,"alpha":2}]}"#,
    );
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["certificates"][0]["status"], "ok");
    assert_eq!(r["certificates"][1]["status"], "hypothesis_violated");
}

#[test]
fn echoed_config_reproduces_numerics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"sequence":{"kind":"geometric","lambda1":1,"ratio":2,"count":12},"measure":{"kind":"powertail","C":1,"alpha":2},
            "q_set":[0.5,1,2],"certificates":[{"kind":"psi"},{"kind":"sublinear"}],"m_list":[2,8,32]}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = muntzlab(&["analyze", "--config", &cfg, "--out", a.to_str().unwrap(), "--n", "10"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ra = read_json(&a.join("report.json"));
    let echo = write(dir.path(), "echo.json", &ra["config"].to_string());
    let o = muntzlab(&["analyze", "--config", &echo, "--out", b.to_str().unwrap()], &[("MUNTZLAB_THREADS", "1")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rb = read_json(&b.join("report.json"));
    for key in ["config", "spectral", "certificates", "modulus", "essential_trend", "lacunarity"] {
        assert_eq!(ra[key], rb[key], "{key}");
    }
    assert_eq!(ra["spectral"]["n"], 10);
    assert_eq!(
        std::fs::read(a.join("singular_values.csv")).unwrap(),
        std::fs::read(b.join("singular_values.csv")).unwrap()
    );
}

#[test]
fn bad_thread_count_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", RANK_ONE);
    let o = muntzlab(
        &["analyze", "--config", &cfg, "--out", dir.path().to_str().unwrap()],
        &[("MUNTZLAB_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MUNTZLAB_THREADS"));
}

#[test]
fn construct_first_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = muntzlab(&["construct", "1", "--n-max", "8", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("example1_ledger.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let r = read_json(&dir.path().join("example1_report.json"));
    assert_eq!(r["build"]["rows"].as_array().unwrap().len(), 8);
}

#[test]
fn construct_second_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = muntzlab(&["construct", "2", "--q", "1", "--r", "0.5", "--n-max", "8", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("example2_report.json"));
    let hs = r["verification"]["riesz"]["offdiag_hs"].as_f64().unwrap();
    assert!(hs < 0.8244, "{hs}");
    assert_eq!(r["verification"]["riesz"]["invertible"], true);
}

#[test]
fn construct_second_example_rejects_r_above_q() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = muntzlab(&["construct", "2", "--q", "0.5", "--r", "1", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    let o = muntzlab(&["construct", "3", "--out", out], &[]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn check_interpolation_on_lebesgue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measures":[{"name":"lebesgue","measure":{"kind":"lebesgue"}}],"t_values":[0.5],"samples":20,"seed":3}"#,
    );
    let o = muntzlab(&["check", "interpolation", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("check_interpolation.json"));
    assert_eq!(r["violations"], 0);
    assert_eq!(r["report"]["families"][0]["instances"], 20);
}

#[test]
fn check_inequalities_and_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write(dir.path(), "i.json", r#"{"instances":20}"#);
    let o = muntzlab(&["check", "inequalities", "--config", &cfg, "--seed", "9", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("check_inequalities.json"));
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["violations"], 0);

    let o = muntzlab(&["check", "certificates", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("check_certificates.json"));
    assert!(r["report"]["families"].as_array().unwrap().len() >= 7);
    assert_eq!(r["violations"], 0);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "i.json", r#"{"instances":20,"typo":1}"#);
    let o = muntzlab(&["check", "inequalities", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
}

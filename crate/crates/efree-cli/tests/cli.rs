use std::path::Path;
use std::process::{Command, Output};

fn efree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efree")).args(args).output().unwrap()
}

fn run(exp: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", exp, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    efree(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_experiment_is_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("bogus", &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_parameter_is_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("fp-spectrum", &out, &["--set", "no.such=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("no.such"));
    assert!(!out.exists());
}

#[test]
fn manifest_has_required_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("fp-spectrum", dir.path(), &["--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    for key in ["experiment", "params", "seed", "outputs", "checks", "version"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["experiment"], "fp-spectrum");
    assert_eq!(m["seed"], 7);
    for out in m["outputs"].as_array().unwrap() {
        assert!(dir.path().join(out.as_str().unwrap()).exists());
    }
}

#[test]
fn validate_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("mm-convergence", dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = dir.path().join("manifest.json");
    let v = efree(&["validate", manifest.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout(&v), stdout(&o));
    assert!(stdout(&v).lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    run("mm-convergence", dir.path(), &[]);
    let csv = dir.path().join("convergence.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    let renamed = header.replacen("E0", "E0_renamed", 1);
    std::fs::write(&csv, format!("{renamed}\n{body}")).unwrap();
    let v = efree(&["validate", dir.path().join("manifest.json").to_str().unwrap()]);
    assert_ne!(v.status.code(), Some(0));
    assert!(stderr(&v).contains("`E0`"), "{}", stderr(&v));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run("fp-linear", a.path(), &["--seed", "3"]);
    let manifest = a.path().join("manifest.json");
    let o = run("fp-linear", b.path(), &["--config", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["manifest.json", "linear.csv", "eigenvalues.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_is_overridden_by_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[study]\nx0 = -0.2\ndelta = 20.0\n").unwrap();
    let out = dir.path().join("out");
    run("mm-convergence", &out, &["--config", cfg.to_str().unwrap(), "--set", "study.delta=30"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["params"]["study.x0"], -0.2);
    assert_eq!(m["params"]["study.delta"], 30.0);
}

#[test]
fn csv_values_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    run("fp-spectrum", dir.path(), &[]);
    let text = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    let cell = text.lines().nth(1).unwrap().split(',').last().unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn model_error_is_recorded_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("mm-convergence", dir.path(), &["--set", "mm.h=-1"]);
    let code = o.status.code();
    assert_ne!(code, Some(0));
    if code == Some(1) {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["checks"][0]["pass"], false);
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn weakkam(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("WEAKKAM_THREADS")
        .output()
        .expect("binary runs")
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

#[test]
fn audit_pendulum() {
    let o = Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .args(["audit-model", "--model"])
        .arg(model("pendulum.json"))
        .current_dir(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["gamma_growth"], 2.0);
    assert!((r["lipschitz_bound"].as_f64().unwrap() - 2.2).abs() < 1e-9);
    assert_eq!(r["normalization_residual"], 0.0);
}

#[test]
fn ergodic_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("pendulum_unnormalized.json");
    let args = ["solve-ergodic", "--model", m.to_str().unwrap(), "--N", "100"];
    let a = weakkam(&args, &dir.path().join("a"));
    let b = weakkam(&args, &dir.path().join("b"));
    assert_eq!(b.stdout, a.stdout);
    assert_eq!(a.status.code(), Some(0));
    let r = report(&a);
    assert!((r["c_estimate"].as_f64().unwrap() - 1.0).abs() < 1e-2);
    for f in ["w.csv", "report.json"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run_id"], r["run_id"]);
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["subcommand"], "solve-ergodic");
    assert!(manifest["model_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn short_horizon_is_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("pendulum.json");
    let o = weakkam(&["solve-ergodic", "--model", m.to_str().unwrap(), "--N", "100", "--T", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&o)["converged"], false);
}

#[test]
fn profile_with_listed_mather_points() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("double_well.json");
    let o = weakkam(
        &["profile", "--model", m.to_str().unwrap(), "--N", "100", "--u0", "builtin:cos", "--mather", "0,0.5", "--plot"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert!(r["sup_gap"].as_f64().unwrap() <= 0.08);
    assert!(r["trace_gap"].as_f64().unwrap() <= 0.05);
    for f in ["direct.csv", "formula.csv", "u0_minus.csv", "direct.gp", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn cauchy_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("pendulum.json");
    let first = weakkam(&["solve-cauchy", "--model", m.to_str().unwrap(), "--N", "64", "--u0", "builtin:sin", "--T", "0.5"], &dir.path().join("a"));
    assert_eq!(first.status.code(), Some(0));
    let u = dir.path().join("a/u_final.csv");
    let second = weakkam(
        &["solve-cauchy", "--model", m.to_str().unwrap(), "--N", "64", "--u0", u.to_str().unwrap(), "--T", "0.5"],
        &dir.path().join("b"),
    );
    assert_eq!(second.status.code(), Some(0));
    // wrong grid size for the CSV
    let bad = weakkam(&["solve-cauchy", "--model", m.to_str().unwrap(), "--N", "32", "--u0", u.to_str().unwrap()], &dir.path().join("c"));
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn usage_and_model_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"family":"mechanical","V":[],"shift":0,"oops":1}"#).unwrap();
    let o = weakkam(&["solve-ergodic", "--model", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let m = model("pendulum.json");
    let o = weakkam(&["solve-ergodic", "--model", m.to_str().unwrap(), "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = weakkam(&["solve-ergodic", "--model", m.to_str().unwrap(), "--N", "100", "--theta", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(1), "CFL-infeasible theta must be rejected");
    let o = Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .args(["audit-model", "--model", m.to_str().unwrap()])
        .env("WEAKKAM_THREADS", "0")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn uniqueness_small() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("double_well.json");
    let o = weakkam(
        &["verify-uniqueness", "--model", m.to_str().unwrap(), "--N", "100", "--trials", "5", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["all_passed"], true);
    let log = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert!(log.lines().any(|l| l.contains("negative_control,inapplicable,true")));
}

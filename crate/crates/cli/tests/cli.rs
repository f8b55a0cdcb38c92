use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gsobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsobs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn repo_config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn list_experiments_is_stable() {
    let a = gsobs(&["list-experiments"]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.contains("uncertainty"));
    assert!(text.contains("observability"));
    let kinds: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        kinds,
        ["smoothing-validate", "uncertainty", "uncertainty-decay", "observability", "lemma-suite"]
    );
    assert_eq!(gsobs(&["list-experiments"]).stdout, a.stdout);
}

#[test]
fn lemma_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = gsobs(&["run", &repo_config("lemma-suite.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["kind"], "lemma-suite");
    assert!(report["version"].is_string());
    assert_eq!(report["config"]["kind"], "lemma-suite");
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("check,p1,p2,p3,lhs,rhs,passed,x,y\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn invalid_delta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"schema_version": 1, "kind": "uncertainty", "profile": {"R": 1, "delta": 1.5, "eta": 0.5, "r0": 2}}"#,
    );
    let o = gsobs(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"schema_version": 1, "kind": "nope"}"#);
    let o = gsobs(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let missing = gsobs(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("uncertainty-decay.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(gsobs(&["run", &cfg, "--out", a.to_str().unwrap(), "--seed", "99"]).status.success());
    assert!(gsobs(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "99", "--threads", "2"])
        .status
        .success());
    for f in ["report.json", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 99);
}

#[test]
fn violated_premise_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "thin.json",
        r#"{"schema_version": 1, "kind": "uncertainty",
            "sensor": {"kind": "periodic", "period": 1, "fill": 0.2}, "gamma_grid": [0.5]}"#,
    );
    let o = gsobs(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("density"));
}

#[test]
fn singular_gramian_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sliver.json",
        r#"{"schema_version": 1, "kind": "observability",
            "sensor": {"kind": "intervals", "pieces": [[0, 1e-9]]},
            "truncation": {"n_trunc": 10, "m_cap": 24, "fit_order": 8}}"#,
    );
    let o = gsobs(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shipped_configs_pass() {
    for name in ["smoothing-validate.json", "uncertainty.json", "observability.json"] {
        let dir = tempfile::tempdir().unwrap();
        let o = gsobs(&["run", &repo_config(name), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

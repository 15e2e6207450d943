use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn possg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_possg")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name).display().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn passing_scenarios_exit_zero() {
    for name in ["equivalence_2x2.json", "identity.json", "jump_path5.json"] {
        let out = possg(&["verify", "--scenario", &scenario(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["passed"], Value::Bool(true));
        assert_eq!(report["summary"]["fails"], 0);
    }
}

#[test]
fn forced_failure_exits_one_and_names_the_site() {
    let dir = tempfile::tempdir().unwrap();
    let out = possg(&["verify", "--scenario", &scenario("forced_failure.json"), "--out", path_str(dir.path()), "--csv"]);
    assert_eq!(out.status.code(), Some(1));
    let report = read_report(dir.path());
    assert_eq!(report["passed"], Value::Bool(false));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] == "fails"));
    assert!(checks[0]["result"]["worst_site"].is_object());
    let csv = fs::read_to_string(dir.path().join("generator.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        possg(&["verify", "--scenario", &scenario("jump_path5.json"), "--out", path_str(dir.path())]);
    }
    let ra = fs::read(a.path().join("report.json")).unwrap();
    let rb = fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let out = possg(&["verify", "--scenario", &scenario("jump_path5.json"), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 1);
}

#[test]
fn sampling_without_seed_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"schema_version": 1, "space": {"uniform": 2},
            "operators": {"a": {"kind": "form", "coeffs": [[1, -1], [-1, 1]]}},
            "checks": [{"id": "pos", "kind": "ouhabaz_positivity", "form": "a"}]}"#,
    )
    .unwrap();
    let out = possg(&["verify", "--scenario", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = possg(&["verify", "--scenario", path_str(&path), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 1, "space": {"weights": [1.0]}, "operators": {"S": "a"}, "checks": []}"#).unwrap();
    let out = possg(&["verify", "--scenario", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("parse error at line 1"), "{err}");
    assert!(err.contains("operators.S"), "{err}");

    let out = possg(&["verify", "--scenario", path_str(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_operator_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"schema_version": 1, "space": {"uniform": 2},
            "operators": {"S": {"kind": "generator", "matrix": [[-1, 1], [1, -1]]}},
            "vectors": {"f": [1, 1]},
            "checks": [{"id": "g", "kind": "generator", "s": "S", "t": "Q", "f": "f"}]}"#,
    )
    .unwrap();
    let out = possg(&["verify", "--scenario", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('Q'));
}

#[test]
fn generated_scenarios_verify() {
    let dir = tempfile::tempdir().unwrap();
    for profile in ["laplacian", "metzler", "jump"] {
        let path: PathBuf = dir.path().join(format!("{profile}.json"));
        let out = possg(&["generate", "--seed", "5", "--size", "6", "--profile", profile, "--out", path_str(&path)]);
        assert_eq!(out.status.code(), Some(0));
        let again = possg(&["generate", "--seed", "5", "--size", "6", "--profile", profile]);
        assert_eq!(fs::read(&path).unwrap(), again.stdout);
        let out = possg(&["verify", "--scenario", path_str(&path)]);
        assert_eq!(out.status.code(), Some(0), "{profile}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn sweep_over_c_crosses_the_minimal_constant() {
    let out = possg(&[
        "sweep", "--scenario", &scenario("equivalence_2x2.json"), "--check", "generator", "--param", "c", "--values",
        "0.1,0.5,1,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let statuses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(statuses.first(), Some(&"fails"));
    assert_eq!(statuses.last(), Some(&"holds"));
}

#[test]
fn kernel_margins_grow_with_jump_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jump10.json");
    possg(&["generate", "--seed", "7", "--size", "10", "--profile", "jump", "--out", path_str(&path)]);
    let out = possg(&[
        "sweep", "--scenario", path_str(&path), "--check", "kernel_theorem", "--param", "jump-scale", "--values",
        "0.25,0.5,1,2,4,8",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let margins: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(margins.len(), 6);
    assert!(margins.iter().all(|&m| m > 0.0));
    assert!(margins.windows(2).all(|w| w[1] > w[0]), "{margins:?}");
}

#[test]
fn converge_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = possg(&[
        "converge", "--scenario", &scenario("equivalence_2x2.json"), "--operator", "T", "--n", "64,128,256,512",
        "--panels", "1024", "--out", path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let euler = fs::read_to_string(dir.path().join("euler.csv")).unwrap();
    for line in euler.lines().skip(2) {
        let ratio: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.35..=0.65).contains(&ratio), "{line}");
    }
    let conv = fs::read_to_string(dir.path().join("convolution.csv")).unwrap();
    assert_eq!(conv.lines().count(), 5);
}

#[test]
fn kernel_command_dumps_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("jump_path5.json");
    let text = fs::read_to_string(&s).unwrap();
    let parsed: Value = serde_json::from_str(&text).unwrap();
    let check = parsed["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["kind"] == "jump_kernel_theorem")
        .expect("bundled jump scenario has a theorem check");
    let id = check["id"].as_str().unwrap();
    let out = possg(&["kernel", "--scenario", &s, "--check", id, "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let margins: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("margins.json")).unwrap()).unwrap();
    assert_eq!(margins["status"], "holds");
    let kernels = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("k_")).count();
    assert_eq!(kernels, 2 * check["times"].as_array().unwrap().len());
}

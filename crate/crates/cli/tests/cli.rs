use std::path::PathBuf;
use std::process::{Command, Output};

use logbar::corpus::{builtin_file, BUILTIN_NAMES};
use logbar::records::{parse_jsonl, TraceRecord};
use logbar::Verdict;
use serde_json::Value;

fn logbar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logbar")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    logbar(args).status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_writes_trace_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.jsonl");
    let o = logbar(&[
        "solve",
        "--builtin",
        "disk",
        "--mu0",
        "1",
        "--mu-factor",
        "0.2",
        "--mu-min",
        "1e-8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let records = parse_jsonl(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(records.len(), 13);
    assert!(records[..12].iter().all(|r| matches!(r, TraceRecord::Path { .. })));
    match &records[12] {
        TraceRecord::Certificate { status, report, .. } => {
            assert_eq!(*status, Verdict::KktPoint);
            assert!(report.as_deref().unwrap().starts_with("global minimizer"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn degenerate_disk_report_flags_unverified_hypotheses() {
    let o = logbar(&["solve", "--builtin", "degenerate-disk"]);
    assert_eq!(o.status.code(), Some(0));
    let last: Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    assert!(last["report"].as_str().unwrap().contains("not established"));
}

#[test]
fn solve_failures_and_usage_errors() {
    assert_eq!(code(&["solve", "--builtin", "degenerate-disk", "--require-assumptions"]), 3);
    assert_eq!(code(&["solve", "--builtin", "nosuch"]), 2);
    assert_eq!(code(&["solve", "--builtin", "disk", "--mu-factor", "2"]), 2);
    assert_eq!(code(&["solve", "--builtin", "disk", "--tol", "0"]), 2);
    assert_eq!(code(&["solve", "--problem", "/nonexistent/problem.json"]), 2);
    assert_eq!(code(&["solve"]), 2);
    // gradient-only steps stall above the stationarity tolerance on epsbox
    assert_eq!(code(&["solve", "--builtin", "epsbox", "--steepest-descent"]), 3);
}

#[test]
fn problem_files_load_like_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, builtin_file("hyperbola").unwrap().to_json()).unwrap();
    let from_file = logbar(&["solve", "--problem", path.to_str().unwrap()]);
    let from_builtin = logbar(&["solve", "--builtin", "hyperbola"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, from_builtin.stdout);
    std::fs::write(&path, "{\"name\": \"bad\"}").unwrap();
    assert_eq!(code(&["solve", "--problem", path.to_str().unwrap()]), 2);
}

#[test]
fn diagnose_exit_codes() {
    assert_eq!(code(&["diagnose", "--builtin", "cassini", "--check", "levelset:1.5", "--expect", "nonconvex"]), 0);
    assert_eq!(code(&["diagnose", "--builtin", "cassini", "--check", "levelset:-2", "--expect", "nonconvex"]), 3);
    assert_eq!(code(&["diagnose", "--builtin", "cassini", "--check", "levelset:1.5"]), 0);
    assert_eq!(code(&["diagnose", "--builtin", "epsbox", "--check", "phiconvexity:1", "--expect", "indefinite"]), 0);
    assert_eq!(code(&["diagnose", "--builtin", "disk", "--check", "nondegeneracy"]), 0);
    assert_eq!(code(&["diagnose", "--builtin", "disk", "--check", "phiconvexity:1", "--expect", "pass"]), 0);
    assert_eq!(code(&["diagnose", "--builtin", "degenerate-disk", "--check", "nondegeneracy"]), 3);
    assert_eq!(code(&["diagnose", "--builtin", "disk", "--check", "convexity"]), 2);
    assert_eq!(code(&["diagnose", "--builtin", "disk", "--check", "phiconvexity:0"]), 2);
    assert_eq!(code(&["diagnose", "--builtin", "disk", "--check", "levelset:0", "--constraint", "2"]), 2);
}

#[test]
fn default_diagnosis_covers_the_hypotheses() {
    let o = logbar(&["diagnose", "--builtin", "cassini"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["checks"], serde_json::json!(["slater", "nondegeneracy", "curvature"]));
    assert!(v["report"]["slater"]["Ok"]["margin"].as_f64().unwrap() > 0.0);
    assert!(v["passed"].as_bool().unwrap());
}

#[test]
fn contour_grid_and_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cassini.csv");
    let o = logbar(&[
        "contour",
        "--builtin",
        "cassini",
        "--levels",
        "2.95,2.5,1.5,0,-2",
        "--res",
        "400",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,g"));
    assert_eq!(lines.count(), 160_000);
    let levels = std::fs::read_to_string(PathBuf::from(format!("{}.levels", out.display()))).unwrap();
    assert_eq!(levels, "2.95\n2.5\n1.5\n0\n-2\n");

    let o = logbar(&["contour", "--builtin", "hyperbola", "--levels", "0", "--res", "100"]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - (v[0] * v[1] - 1.0)).abs() <= 1e-12);
    }
    assert_eq!(code(&["contour", "--builtin", "cassini", "--res", "1"]), 2);
    assert_eq!(code(&["contour", "--builtin", "cassini", "--constraint", "2"]), 2);
}

#[test]
fn contour_rejects_non_planar_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("line.json");
    let text = r#"{"name": "line", "nvars": 1, "objective": "x1", "constraints": ["1 - x1^2"], "box": [[-2, 2]]}"#;
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&["contour", "--problem", path.to_str().unwrap(), "--res", "10"]), 2);
}

#[test]
fn oracle_output() {
    let o = logbar(&["oracle", "--builtin", "disk", "--res", "2001"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["f_best"].as_f64().unwrap() - (3.0 - 2.0 * 2f64.sqrt())).abs() <= 1e-4);
    assert_eq!(v["grid_resolution"], 2001);
    assert_eq!(code(&["oracle", "--builtin", "disk", "--res", "3"]), 2);
}

#[test]
fn list_exports_the_shipped_data() {
    let o = logbar(&["list"]);
    let names: Vec<String> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(names, BUILTIN_NAMES);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["list", "--export", dir.path().to_str().unwrap()]), 0);
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    for name in BUILTIN_NAMES {
        let file = format!("{name}.json");
        assert_eq!(std::fs::read(dir.path().join(&file)).unwrap(), std::fs::read(data.join(&file)).unwrap());
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bicap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicap")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn cap_examples() {
    let dir = tempfile::tempdir().unwrap();
    let corner = write(dir.path(), "corner.json", r#"{"depth":1,"set":[{"x":[1,0],"y":[1,0]}]}"#);
    let empty = write(dir.path(), "empty.json", r#"{"depth":1,"set":[]}"#);
    let four = write(
        dir.path(),
        "four.json",
        r#"{"depth":1,"set":[{"x":[1,0],"y":[1,0]},{"x":[1,1],"y":[1,0]},{"x":[1,0],"y":[1,1]},{"x":[1,1],"y":[1,1]}]}"#,
    );
    for (path, want) in [(corner, 0.25), (empty, 0.0), (four, 4.0 / 9.0)] {
        let out = bicap(&["cap", &path]);
        assert_eq!(out.status.code(), Some(0));
        let v = json(&out);
        assert!((v["cap"].as_f64().unwrap() - want).abs() < 1e-9);
        assert_eq!(v["config"]["command"], "cap");
        assert!(v["certificate"]["min_potential"].is_number());
    }
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{not json");
    assert_eq!(bicap(&["cap", &bad]).status.code(), Some(2));
    let off_tree = write(dir.path(), "off.json", r#"{"depth":1,"set":[{"x":[3,0],"y":[0,0]}]}"#);
    assert_eq!(bicap(&["cap", &off_tree]).status.code(), Some(2));
    assert_eq!(bicap(&["cap", "/nonexistent/set.json"]).status.code(), Some(2));
}

#[test]
fn oracle_suite_is_clean() {
    let out = bicap(&["suite", "oracles", "--depth", "6", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["violations"], 0);
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn maxprinciple_suite_reaches_bound() {
    let out = bicap(&["suite", "maxprinciple", "--base", "20", "--steps", "40", "--depth", "3", "--count", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["staircase"]["v_at_omega"].as_f64().unwrap() >= 7.2);
}

#[test]
fn sci_suite_csv_and_merge() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv").display().to_string();
    let b = dir.path().join("b.csv").display().to_string();
    assert_eq!(bicap(&["suite", "sci", "--depth", "4", "--count", "12", "--out", &a]).status.code(), Some(0));
    assert_eq!(bicap(&["suite", "sci", "--depth", "3", "--count", "8", "--out", &b]).status.code(), Some(0));
    let text = fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(lines.next().unwrap(), "instance-id,L,k,cap_Ek,term,cumulative,norm_sq_f,ratio");
    assert!(text.lines().last().unwrap().starts_with("max,4,"));

    let one = bicap(&["report-merge", &a]);
    assert_eq!(one.stdout, text.as_bytes());

    let both = bicap(&["report-merge", &a, &b]);
    assert_eq!(both.status.code(), Some(0));
    let rows = |s: &str| s.lines().filter(|l| !l.starts_with('#')).count() - 1;
    let merged = String::from_utf8(both.stdout).unwrap();
    assert_eq!(rows(&merged), rows(&text) + rows(&fs::read_to_string(&b).unwrap()));
    assert!(merged.lines().find(|l| !l.starts_with('#')).unwrap().starts_with("source,"));
}

#[test]
fn merge_rejects_mixed_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "x,y\n1,2\n");
    let b = write(dir.path(), "b.csv", "x,z\n1,2\n");
    assert_eq!(bicap(&["report-merge", &a, &b]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_bicap"))
            .args(["suite", "sci", "--depth", "4", "--count", "16", "--seed", "11"])
            .env("BICAP_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn counterexample_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let p = path.display().to_string();
    let out = bicap(&["counterexample", "--base", "2", "--steps", "2", "--report", &p]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert!((v["staircase"]["v_at_omega"].as_f64().unwrap() - 5.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["config"]["base"], 2);
}

#[test]
fn carleson_uniform_grid() {
    let out = bicap(&["suite", "carleson", "--depth", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["ratio"].as_f64().unwrap() - 1.5625).abs() < 1e-6);
    assert_eq!(v["easy_direction"], true);
}

#[test]
fn iteration_cap_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let set = write(
        dir.path(),
        "hard.json",
        r#"{"depth":4,"kind":"boundary","set":[{"x":[1,0],"y":[3,0]},{"x":[2,1],"y":[1,1]},{"x":[4,3],"y":[0,0]},{"x":[3,5],"y":[2,2]}]}"#,
    );
    let out = bicap(&["cap", &set, "--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["certified"], false);
    assert!(v["cap"].as_f64().unwrap() > 0.0);
}

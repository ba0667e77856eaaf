use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spr_core::generate::{random_connected_instance, RandomGraphSpec};
use spr_core::io::{parse_instance, write_instance};

fn spr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spr")).args(args).output().expect("spawn spr")
}

fn write_random(dir: &Path, name: &str, n: usize, k: usize, seed: u64) -> PathBuf {
    let inst = random_connected_instance(&RandomGraphSpec { n, k, extra_edges: n, max_weight: 10 }, seed).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, write_instance(&inst)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn preprocess_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_random(dir.path(), "g.txt", 60, 5, 1);
    let out = dir.path().join("g_star.txt");
    let o = spr(&["preprocess", s(&g), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let inst = parse_instance(&text).unwrap();
    assert_eq!(write_instance(&inst), text);

    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("g_star.txt.json")).unwrap()).unwrap();
    assert_eq!(side["schema_version"], 1);
    assert_eq!(side["minor_vertices"].as_u64().unwrap() as usize, inst.vertex_count());
    assert_eq!(side["vertex_map"].as_array().unwrap().len(), 60);
    assert!(side["non_terminals"].as_u64() <= side["size_bound"].as_u64());
}

#[test]
fn run_on_preprocessed_graph_matches_no_preprocess() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_random(dir.path(), "g.txt", 80, 6, 2);
    let star = dir.path().join("g_star.txt");
    assert!(spr(&["preprocess", s(&g), "-o", s(&star)]).status.success());
    let a = spr(&["run", "--seed", "7", s(&star)]);
    let b = spr(&["run", "--seed", "7", "--no-preprocess", s(&star)]);
    let c = spr(&["run", "--seed", "7", s(&g)]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert!(String::from_utf8_lossy(&a.stderr).contains("seed: 7"));
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 7);
    assert!(v["distortion"].as_f64().unwrap() >= 1.0);
}

#[test]
fn eval_reproduces_run_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_random(dir.path(), "g.txt", 40, 4, 3);
    let o = spr(&["run", "--seed", "1", "--no-preprocess", s(&g)]);
    let part = dir.path().join("p.json");
    std::fs::write(&part, &o.stdout).unwrap();
    let e = spr(&["eval", s(&g), s(&part)]);
    assert!(e.status.success());
    let run: Value = serde_json::from_slice(&o.stdout).unwrap();
    let eval: Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(run["distortion"], eval["distortion"]);
    assert_eq!(run["pairs"], eval["pairs"]);
}

#[test]
fn eval_rejects_invalid_partition() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("star.txt");
    std::fs::write(&g, "4 3 3\n1 2 3\n0 1 1\n0 2 1\n0 3 1\n").unwrap();
    let p = dir.path().join("p.json");
    std::fs::write(&p, r#"{"assignment":[0,1,1,2]}"#).unwrap();
    let o = spr(&["eval", s(&g), s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("terminal 0"));
}

#[test]
fn oracle_guards_against_large_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("path.txt");
    let mut text = String::from("11 10 2\n0 10\n");
    for i in 0..10 {
        text.push_str(&format!("{i} {} 1\n", i + 1));
    }
    std::fs::write(&g, text).unwrap();
    let o = spr(&["oracle", s(&g)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("9 non-terminals"));

    let star = dir.path().join("star.txt");
    std::fs::write(&star, "4 3 3\n1 2 3\n0 1 1\n0 2 1\n0 3 1\n").unwrap();
    let o = spr(&["oracle", s(&star)]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["distortion"], 2.0);
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(spr(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(spr(&["run", "--delta"]).status.code(), Some(2));
    assert_eq!(spr(&["run", "/nonexistent/graph.txt"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "3 1 2\n0 1\n0 1 1\n").unwrap();
    let o = spr(&["run", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disconnected"));
}

#[test]
fn tailcheck_emits_a_table() {
    let o = spr(&["tailcheck", "--suite", "lemma6", "--suite", "cdf", "--samples", "20000", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 4);
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["suite"] == "lemma6") && rows.iter().any(|r| r["suite"] == "cdf"));
    assert_eq!(spr(&["tailcheck", "--samples", "10"]).status.code(), Some(2));
}

#[test]
fn experiment_on_a_fixed_graph_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_random(dir.path(), "g.txt", 50, 4, 5);
    let csv = dir.path().join("e.csv");
    let o = spr(&["experiment", "--graph", s(&g), "--trials", "8", "--seed", "3", "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let trials = v["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 8);
    assert!(trials.iter().enumerate().all(|(i, t)| t["trial"] == i));
    assert!(trials.iter().all(|t| t["vertices"] == 50));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 9);
    let again = spr(&["experiment", "--graph", s(&g), "--trials", "8", "--seed", "3"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn trace_file_has_rounds_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_random(dir.path(), "g.txt", 30, 3, 6);
    let t = dir.path().join("t.json");
    assert!(spr(&["run", "--seed", "2", "--trace", s(&t), s(&g)]).status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["rounds"].is_array() && v["events"].is_array());
}

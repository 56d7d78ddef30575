use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cde")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_instance_b(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("b.json");
    let json = r#"{"version":1,"n_clients":3,"n_unreliable":1,"n_packets":3,"alpha":null,"seed":null,"sets":[[0],[1],[2]]}"#;
    std::fs::write(&path, json).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn closed_m1_on_instance_b_is_all_ones_and_verifies() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance_b(&dir);
    let sched = dir.path().join("s.json");
    let out = cde(&["solve", "-i", path_str(&inst), "--method", "closed-m1", "-o", path_str(&sched)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let json: Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(json["p_divisor"], 1);
    assert_eq!(json["counts"], serde_json::json!([1, 1, 1]));
    assert_eq!(json["version"], 1);

    let out = cde(&["verify", "-i", path_str(&inst), "-s", path_str(&sched), "--against", "full"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0 violations"));
}

#[test]
fn zero_schedule_on_instance_b_fails_three_constraints() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance_b(&dir);
    let sched = dir.path().join("zero.json");
    std::fs::write(&sched, r#"{"version":1,"p_divisor":1,"counts":[0,0,0],"provenance":"lp-exact"}"#).unwrap();
    let out = cde(&["verify", "-i", path_str(&inst), "-s", path_str(&sched)]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("violated")).count(), 3);
    assert!(text.contains("3 violations"));
}

#[test]
fn malformed_inputs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(cde(&["lp", "-i", path_str(&bad)]).status.code(), Some(2));
    assert_eq!(cde(&["lp", "-i", "/nonexistent/instance.json"]).status.code(), Some(2));
    assert_eq!(cde(&["gen", "--clients", "3", "--unreliable", "3", "--packets", "5"]).status.code(), Some(2));
    assert_eq!(cde(&["solve", "--method", "nonsense", "-i", path_str(&bad)]).status.code(), Some(2));
}

#[test]
fn gen_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let args = |o: &Path| {
        cde(&[
            "gen", "--clients", "5", "--unreliable", "1", "--packets", "30", "--alpha", "0.4", "--seed", "11", "-o",
            path_str(o),
        ])
    };
    assert_eq!(args(&a).status.code(), Some(0));
    let first = std::fs::read_to_string(&a).unwrap();
    assert_eq!(args(&a).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&a).unwrap(), first);
    let out = cde(&["lp", "-i", path_str(&a), "--which", "m1-full"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("optimum"));
}

#[test]
fn lp_exact_schedule_decodes_in_simulation() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("i.json");
    let sched = dir.path().join("s.json");
    let report = dir.path().join("r.json");
    cde(&["gen", "--clients", "4", "--unreliable", "1", "--packets", "12", "--seed", "3", "-o", path_str(&inst)]);
    assert_eq!(cde(&["solve", "-i", path_str(&inst), "-o", path_str(&sched)]).status.code(), Some(0));
    let out = cde(&["simulate", "-i", path_str(&inst), "-s", path_str(&sched), "--seed", "5", "-o", path_str(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["persistent_failure"], false);
    assert_eq!(json["sets"].as_array().unwrap().len(), 4);
}

#[test]
fn dual_witness_matches_closed_form_on_instance_b() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance_b(&dir);
    let witness = dir.path().join("w.json");
    let out = cde(&["dual", "-i", path_str(&inst), "--which", "m1", "-o", path_str(&witness)]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("gap 0/1"));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&witness).unwrap()).unwrap();
    assert_eq!(json["objective"], "3/1");
}

#[test]
fn sweep_writes_csv_with_header() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = cde(&[
        "sweep", "--clients", "4", "--unreliable", "1", "--packets", "20,40", "--trials", "3", "-o", path_str(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("seed,N,M,K,alpha,method"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn asymptotics_prints_one_row_per_subset_size() {
    let out = cde(&["asymptotics", "--clients", "5", "--unreliable", "1", "--alpha", "0.5", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1 + 3);
}

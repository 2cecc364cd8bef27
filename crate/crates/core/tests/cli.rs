//! End-to-end checks of the `rigclique` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

// the three-cover example: four vertices over attributes {A, B, C} = {0, 1, 2}
const COVER: &str = "4 3 0\n0 1\n0 2\n0 1 2\n1 2\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigclique"))
        .args(args)
        .output()
        .expect("spawn rigclique")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_cover(dir: &Path) -> String {
    let path = dir.join("cover.txt");
    std::fs::write(&path, COVER).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn exact_clique_on_cover_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cover(dir.path());
    let v = stdout_json(&bin(&["clique", &path, "--algo", "exact"]));
    assert_eq!(v["size"], 4);
    assert_eq!(v["algorithm"], "exact");
    assert_eq!(v["vertices"].as_array().unwrap().len(), 4);

    let mono = stdout_json(&bin(&["clique", &path, "--algo", "mono"]));
    assert!(mono["size"].as_u64().unwrap() >= 3);
}

#[test]
fn graph_of_cover_instance_is_k4() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cover(dir.path());
    let out = bin(&["graph", &path]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let edges: Vec<&str> = text.lines().collect();
    assert_eq!(edges, ["0 1", "0 2", "0 3", "1 2", "1 3", "2 3"]);
}

#[test]
fn predict_finite_variance() {
    let v = stdout_json(&bin(&["predict", "finite-variance", "--n", "1000000"]));
    let x = v["value"].as_f64().unwrap();
    assert!((x - 5.261).abs() <= 1e-3, "{x}");
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let law = r#"{"kind":"PowerLawTail","alpha":1.5,"y_min":1.0}"#;
    for p in [&a, &b] {
        let out = bin(&[
            "gen",
            "--n",
            "300",
            "--m",
            "300",
            "--law",
            law,
            "--seed",
            "42",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert!(a.starts_with(b"300 300 42\n"));

    let other = bin(&["gen", "--n", "300", "--m", "300", "--law", law, "--seed", "43"]);
    assert_ne!(other.stdout, a);
}

#[test]
fn usage_errors_exit_one() {
    let out = bin(&["clique", "x.txt", "--algo", "exact", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());

    assert_eq!(bin(&["clique", "x.txt", "--algo", "fastest"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let out = bin(&["clique", "/definitely/missing.txt", "--algo", "greedy"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "2 3 0\n0 7\n1\n").unwrap();
    assert_eq!(bin(&["graph", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn experiment_replays_cover_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_cover(dir.path());
    let config = serde_json::json!({
        "experiment": "finite-variance-structure",
        "schedule": [[4, 3]],
        "trials": 1,
        "master_seed": 5,
        "instance_file": path,
    });
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, config.to_string()).unwrap();

    let v = stdout_json(&bin(&["experiment", cfg.to_str().unwrap()]));
    let metrics = &v["records"][0]["metrics"];
    assert_eq!(metrics["omega"], 4.0);
    assert_eq!(metrics["omega_prime"], 3.0);
    assert_eq!(metrics["gap"], 1.0);
    assert_eq!(v["passed"], true);

    // same config, CSV to a file: header plus one row
    let csv = dir.path().join("out.csv");
    let out = bin(&[
        "experiment",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);

    // a gap of one against max_gap = 0 fails the run
    let mut strict = config.clone();
    strict["overrides"] = serde_json::json!({ "max_gap": 0.0 });
    std::fs::write(&cfg, strict.to_string()).unwrap();
    let out = bin(&["experiment", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[FAIL]"));

    let out = bin(&["experiment", cfg.to_str().unwrap(), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"degree-moments","schedule":[[300,300]],"trials":4,"master_seed":9,"worker_count":2}"#,
    )
    .unwrap();
    let a = bin(&["experiment", cfg.to_str().unwrap()]);
    let b = bin(&["experiment", cfg.to_str().unwrap(), "--workers", "1"]);
    assert!(a.status.code() == Some(0) || a.status.code() == Some(3));
    // the config echo records the worker count, so compare the records only
    let ra: Value = serde_json::from_slice(&a.stdout).unwrap();
    let rb: Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(ra["records"], rb["records"]);
    assert_eq!(ra["aggregates"], rb["aggregates"]);
    assert_eq!(a.stdout, bin(&["experiment", cfg.to_str().unwrap()]).stdout);
}

#[test]
fn maxload_exact_and_sampled() {
    let v = stdout_json(&bin(&["maxload", "3", "3", "--exact"]));
    // all three in distinct bins: 3!/27
    assert!((v["pmf"]["1"].as_f64().unwrap() - 6.0 / 27.0).abs() < 1e-15);
    assert!((v["pmf"]["3"].as_f64().unwrap() - 3.0 / 27.0).abs() < 1e-15);
    let a = bin(&["maxload", "10", "4", "--trials", "50", "--seed", "1"]);
    let b = bin(&["maxload", "10", "4", "--trials", "50", "--seed", "1"]);
    assert_eq!(a.stdout, b.stdout);
}

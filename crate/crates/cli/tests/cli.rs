//! Runs the `cvar-mdp` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvar-mdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.push("--json");
    let out = run(&full);
    assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const ONE_STATE: &str = r#"{
  "name": "single",
  "states": ["s"],
  "actions": {"s": ["a"]},
  "transitions": {"s": {"a": {"s": 1.0}}},
  "rewards": {"s": {"a": 7.5}}
}"#;

#[test]
fn solve_three_state_instance() {
    let v = json(&["solve", "--builtin", "example2", "--alpha", "0.7"]);
    assert!((v["value"].as_f64().unwrap() - 93.24).abs() < 0.01);
    assert_eq!(v["n_randomizations"], 1);
    assert_eq!(v["policy"]["1"]["3"], 1.0);
    assert!((v["policy"]["3"]["1"].as_f64().unwrap() - 0.0255).abs() < 1e-3);
    for key in ["left_gap", "right_gap", "oracle_gap"] {
        assert!(v["certificates"][key].is_number(), "{key}");
    }
    assert!(v["flags"].as_array().unwrap().is_empty());
}

#[test]
fn table_and_json_carry_the_same_numbers() {
    let args = [
        "solve",
        "--builtin",
        "endowment",
        "--alpha",
        "0.9",
        "--beta",
        "0.5",
    ];
    let v = json(&args);
    let out = run(&args);
    assert!(out.status.success());
    let text = stdout(&out);
    for (label, key) in [
        ("value", "value"),
        ("CVaR", "cvar"),
        ("mean", "mean"),
        ("y* (VaR)", "y_star"),
    ] {
        let line = text.lines().find(|l| l.starts_with(label)).unwrap();
        let shown = line.split_whitespace().last().unwrap();
        assert_eq!(shown, format!("{:.4}", v[key].as_f64().unwrap()), "{label}");
    }
    assert!(text.contains("assumption-violation"));
}

#[test]
fn single_state_value_is_its_reward() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "one.json", ONE_STATE);
    let v = json(&[
        "solve",
        "--instance",
        &path,
        "--alpha",
        "0.3",
        "--mode",
        "dual-primal",
    ]);
    assert!((v["value"].as_f64().unwrap() - 7.5).abs() < 1e-9);
    assert_eq!(v["y_star"], 7.5);
    let e = json(&["enumerate", "--instance", &path, "--alpha", "0.3"]);
    assert_eq!(e["rows"].as_array().unwrap().len(), 1);
    assert!(e["gap"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn enumerate_reports_gap_to_randomized_optimum() {
    let e = json(&["enumerate", "--builtin", "example2", "--alpha", "0.7"]);
    let rows = e["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 27);
    let values: Vec<f64> = rows.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert!((values[0] - 92.6675).abs() < 1e-4);
    let gap = e["gap"].as_f64().unwrap();
    assert!((gap - (e["randomized_value"].as_f64().unwrap() - values[0])).abs() < 1e-12);
    assert!((gap - 0.5727).abs() < 1e-4);

    let endowment = json(&[
        "enumerate",
        "--builtin",
        "endowment",
        "--alpha",
        "0.9",
        "--beta",
        "0.5",
    ]);
    assert!(endowment["gap"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn scan_marks_the_minimizing_endpoint() {
    let out = run(&["scan", "--builtin", "example2", "--alpha", "0.7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let marked: Vec<&str> = text.lines().filter(|l| l.ends_with('*')).collect();
    assert_eq!(marked.len(), 1);
    assert!(marked[0].contains("70.0000") && marked[0].contains("93.24"));
    let v = json(&["scan", "--builtin", "example2", "--alpha", "0.7"]);
    let ys: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["y"].as_f64().unwrap())
        .collect();
    assert!(ys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn check_lists_multichain_policies() {
    let out = run(&["check", "--builtin", "example1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("not unichain"));
    assert!(text.contains("s1→a11, s2→a22"));
    let v = json(&["check", "--builtin", "example2"]);
    assert_eq!(v["assumption_holds"], true);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run(&[
            "gen",
            "--seed",
            "7",
            "--states",
            "3",
            "--actions",
            "2",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v = json(&["solve", "--instance", a.to_str().unwrap(), "--alpha", "0.5"]);
    assert!(v["value"].is_number());
}

#[test]
fn simulate_exports_sequences() {
    let out = run(&[
        "simulate",
        "--builtin",
        "example1",
        "--alpha",
        "0.5",
        "--T",
        "1",
        "--policy",
        "example1",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "t,cvar_t,cesaro_t\n0,2,2\n");

    let v = json(&[
        "simulate",
        "--builtin",
        "example1",
        "--alpha",
        "0.5",
        "--T",
        "13",
        "--policy",
        "example1",
    ]);
    let per_step: Vec<f64> = v["per_step"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(per_step[..5], [2.0, -2.0, -2.0, -2.0, 2.0]);
}

#[test]
fn simulate_with_solved_policy_file_converges() {
    let dir = tempfile::tempdir().unwrap();
    let solved = stdout(&run(&[
        "solve",
        "--builtin",
        "example2",
        "--alpha",
        "0.7",
        "--json",
    ]));
    let path = write(dir.path(), "policy.json", &solved);
    let csv = dir.path().join("seq.csv");
    let out = run(&[
        "simulate",
        "--builtin",
        "example2",
        "--alpha",
        "0.7",
        "--T",
        "400",
        "--policy",
        &path,
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    // Per-step CVaR approaches the long-run optimum; the Cesàro mean lags.
    assert!((last[1] - 93.2402).abs() < 1e-3, "{last:?}");
    assert!(last[2] < last[1] + 1e-9);
}

#[test]
fn monte_carlo_is_reproducible() {
    let args = [
        "simulate",
        "--builtin",
        "example2",
        "--alpha",
        "0.7",
        "--T",
        "20",
        "--replications",
        "300",
        "--seed",
        "5",
        "--json",
    ];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["monte_carlo"]["replications"], 300);
}

#[test]
fn lp_export_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("dual.lp");
    let out = run(&[
        "solve",
        "--builtin",
        "example2",
        "--alpha",
        "0.7",
        "--lp-out",
        lp.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&lp).unwrap();
    assert!(
        text.starts_with("\\ ") && text.contains("Maximize") && text.trim_end().ends_with("End")
    );
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_rows = write(
        dir.path(),
        "bad.json",
        &ONE_STATE.replace(r#"{"s": 1.0}"#, r#"{"s": 0.5}"#),
    );
    let broken = write(dir.path(), "broken.json", "{ \"name\": ");
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--builtin", "nope", "--alpha", "0.5"],
        vec!["solve", "--builtin", "example2", "--alpha", "1.0"],
        vec![
            "solve",
            "--builtin",
            "example2",
            "--alpha",
            "0.5",
            "--beta",
            "-1",
        ],
        vec!["solve", "--instance", "/nonexistent.json", "--alpha", "0.5"],
        vec!["solve", "--instance", &bad_rows, "--alpha", "0.5"],
        vec!["solve", "--instance", &broken, "--alpha", "0.5"],
        vec!["solve", "--gen", "1,2", "--alpha", "0.5"],
        vec!["solve", "--alpha", "0.5"],
        vec![
            "solve",
            "--builtin",
            "example2",
            "--instance",
            &broken,
            "--alpha",
            "0.5",
        ],
        vec![
            "simulate",
            "--builtin",
            "example2",
            "--alpha",
            "0.5",
            "--T",
            "5",
            "--policy",
            "example1",
        ],
        vec!["check", "--instance", &bad_rows],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty(), "{args:?}");
    }
}

#[test]
fn non_communicating_instance_needs_waiver() {
    let dir = tempfile::tempdir().unwrap();
    // Two absorbing states: never communicating, always multichain.
    let text = r#"{
      "name": "split",
      "states": ["u", "v"],
      "actions": {"u": ["a"], "v": ["a"]},
      "transitions": {"u": {"a": {"u": 1.0}}, "v": {"a": {"v": 1.0}}},
      "rewards": {"u": {"a": 1.0}, "v": {"a": 3.0}}
    }"#;
    let path = write(dir.path(), "split.json", text);
    let out = run(&["solve", "--instance", &path, "--alpha", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--waive-assumption"));
    let v = json(&[
        "solve",
        "--instance",
        &path,
        "--alpha",
        "0.5",
        "--waive-assumption",
    ]);
    assert!(v["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "assumption-violation"));
}

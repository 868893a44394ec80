use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn premarshal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premarshal"))
        .args(args)
        .output()
        .expect("spawn premarshal")
}

fn ok(args: &[&str]) -> String {
    let out = premarshal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A 2x2 bay with one container per ship and scenarios from a random distribution.
fn tiny_inputs(dir: &TempDir) -> (std::path::PathBuf, std::path::PathBuf) {
    let config = dir.path().join("bay.json");
    fs::write(&config, r#"{"S": 2, "H": 2, "R": 3, "class_counts": [1, 1, 1]}"#).unwrap();
    let dist = dir.path().join("dist.json");
    let scenarios = dir.path().join("scenarios.json");
    ok(&["gen-dist", "--ships", "3", "--seed", "5", "--out", p(&dist)]);
    ok(&[
        "gen-scenarios",
        "--dist",
        p(&dist),
        "--count",
        "40",
        "--seed",
        "5",
        "--out",
        p(&scenarios),
    ]);
    (config, scenarios)
}

#[test]
fn solvers_agree_with_the_oracle() {
    let dir = TempDir::new().unwrap();
    let (config, scenarios) = tiny_inputs(&dir);
    let oracle: Value = serde_json::from_str(&ok(&[
        "oracle",
        "--config",
        p(&config),
        "--scenarios",
        p(&scenarios),
        "--alpha",
        "0.5",
    ]))
    .unwrap();
    assert!(oracle["layouts_evaluated"].as_u64().unwrap() > 1);

    for method in ["direct", "cutting-plane"] {
        let layout = dir.path().join(format!("{method}.json"));
        ok(&[
            "solve",
            "--config",
            p(&config),
            "--scenarios",
            p(&scenarios),
            "--method",
            method,
            "--alpha",
            "0.5",
            "--out",
            p(&layout),
        ]);
        let solved = json(&layout);
        assert_eq!(solved["status"], "Optimal");
        let objective = solved["objective"].as_f64().unwrap();
        assert!(
            (objective - oracle["objective"].as_f64().unwrap()).abs() < 1e-6,
            "{method}"
        );

        let report: Value = serde_json::from_str(&ok(&[
            "evaluate",
            "--layout",
            p(&layout),
            "--scenarios",
            p(&scenarios),
            "--alpha",
            "0.5",
        ]))
        .unwrap();
        assert!((report["cvar"].as_f64().unwrap() - objective).abs() < 1e-9);
        for key in ["var", "mean", "q75", "q90", "q99", "max"] {
            assert!(report.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn generation_is_seeded() {
    let a = ok(&["gen-dist", "--R", "4", "--seed", "9"]);
    let b = ok(&["gen-dist", "--ships", "4", "--seed", "9"]);
    let c = ok(&["gen-dist", "--ships", "4", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let spec: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(spec["mu"].as_array().unwrap().len(), 4);
}

#[test]
fn cutting_plane_writes_log_and_model() {
    let dir = TempDir::new().unwrap();
    let (config, scenarios) = tiny_inputs(&dir);
    let log = dir.path().join("log.csv");
    let lp = dir.path().join("master.lp");
    ok(&[
        "solve",
        "--config",
        p(&config),
        "--scenarios",
        p(&scenarios),
        "--log",
        p(&log),
        "--dump-lp",
        p(&lp),
    ]);
    let log = fs::read_to_string(log).unwrap();
    assert!(log.starts_with("k,LB,UB,gap,cut_size,new_blocks,master_time_s\n"));
    assert!(log.lines().count() >= 2);
    let lp = fs::read_to_string(lp).unwrap();
    assert!(lp.contains("End"));
}

#[test]
fn deterministic_needs_no_scenarios() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bay.json");
    fs::write(&config, r#"{"S": 3, "H": 2, "R": 3, "class_counts": [1, 2, 1]}"#).unwrap();
    let out = ok(&["solve", "--config", p(&config), "--method", "deterministic-scheduled"]);
    let solved: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(solved["objective"].as_f64().unwrap(), 0.0);

    let missing = premarshal(&["solve", "--config", p(&config), "--method", "direct"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--scenarios"));
}

#[test]
fn malformed_input_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bay.json");
    fs::write(&config, r#"{"S": 2, "H": 2, "R": 3, "class_counts": [1, 1]}"#).unwrap();
    let out = premarshal(&["solve", "--config", p(&config), "--method", "deterministic-scheduled"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = premarshal(&["solve", "--config", p(&config), "--method", "simplex"]);
    assert!(!bad.status.success());
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let bay = dir.path().join("tiny.json");
    fs::write(&bay, r#"{"S": 3, "H": 2, "R": 3, "class_counts": [1, 2, 1]}"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "experiment",
            "--bay",
            p(&bay),
            "--alphas",
            "0,0.75",
            "--train-sizes",
            "20",
            "--test-size",
            "200",
            "--trials",
            "2",
            "--methods",
            "direct,cutting-plane,deterministic-scheduled",
            "--seed",
            "3",
            "--out",
            p(&out),
        ]);
        out
    };
    let first = run("a");
    let second = run("b");
    for file in ["trials.csv", "aggregate.csv", "aggregate.md"] {
        let a = fs::read_to_string(first.join(file)).unwrap();
        assert_eq!(a, fs::read_to_string(second.join(file)).unwrap(), "{file}");
    }
    assert!(first.join("timings.csv").exists());
    let aggregate = fs::read_to_string(first.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("dataset,method,param,metric,mean,stderr,n_trials\n"));
    assert!(aggregate.contains("tiny,deterministic-scheduled,scheduled,test_mean,"));
    assert!(aggregate.contains("tiny,direct,alpha=0.75;I=20,objective,"));
}

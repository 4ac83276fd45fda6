use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dgsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgsplit"))
        .args(args)
        .output()
        .expect("spawn dgsplit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_study_config(dir: &Path) -> String {
    let p = dir.join("study.json");
    fs::write(
        &p,
        r#"{"preset":"experiment1","samples":4,"time_steps":[2,4,8],
            "time_cells":4,"time_reference_steps":16,"noise_modes":6}"#,
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_reports_four_passing_checks() {
    let o = dgsplit(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains("PASS")).count(), 4, "{out}");
    assert!(!out.contains("FAIL"));
}

#[test]
fn presets_lists_every_name() {
    let o = dgsplit(&["presets"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for name in ["experiment1", "experiment2", "heat1d", "heat2d"] {
        assert!(out.contains(name), "missing {name}");
    }
    let j = dgsplit(&["presets", "--json"]);
    assert!(j.status.success());
    assert!(stdout(&j).contains("\"run_cells\""));
}

#[test]
fn run_writes_state_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = dgsplit(&[
        "run", "--preset", "experiment1", "--cells", "4", "--steps", "8", "--seed", "5",
        "--snapshots", "2", "--dump-path", "--export-operators",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "final_state.bin", "final_state.csv", "run.json", "trajectory.bin", "path.bin",
        "A_h.mtx", "A_1.mtx", "A_2.mtx",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["cells"], 4);
    assert_eq!(meta["steps"], 8);
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["method"], "dr");
    assert!(meta["final_l2_norm"].as_f64().unwrap().is_finite());
}

#[test]
fn run_is_reproducible_for_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut states = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("r{k}"));
        let o = dgsplit(&[
            "run", "--cells", "4", "--steps", "8", "--seed", "9", "--method", "lie",
            "--threads", threads, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        states.push(fs::read(out.join("final_state.bin")).unwrap());
    }
    assert_eq!(states[0], states[1]);
}

#[test]
fn study_csv_is_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_study_config(dir.path());
    let mut csvs = Vec::new();
    for (k, threads) in ["1", "8", "8"].iter().enumerate() {
        let out = dir.path().join(format!("s{k}"));
        let o = dgsplit(&[
            "study", "--config", &cfg, "--axis", "time", "--method", "all", "--seed", "3",
            "--threads", threads, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut run = Vec::new();
        for m in ["dr", "lie", "euler"] {
            run.push(fs::read_to_string(out.join(format!("study_time_{m}.csv"))).unwrap());
            assert!(out.join(format!("study_time_{m}.json")).is_file());
        }
        csvs.push(run);
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
    let header = csvs[0][0].lines().next().unwrap();
    assert_eq!(header, "level,h,tau,samples,error,sem,local_order");
    assert_eq!(csvs[0][0].lines().count(), 4);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"seed": 1, "method": "euler", "run_cells": 4, "run_steps": 4}"#).unwrap();
    let out = dir.path().join("o");
    let o = dgsplit(&[
        "run", "--config", cfg.to_str().unwrap(), "--seed", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 2);
    assert_eq!(meta["method"], "euler");
    assert_eq!(meta["cells"], 4);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = dgsplit(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dgsplit(&["study", "--method", "rk4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"preset": "heat2d"}"#, "preset"),
        (r#"{"sigmaa": 1.0}"#, "sigmaa"),
        (r#"{"sigma": -1.0}"#, "sigma"),
        (r#"{"samples": 0}"#, "samples"),
    ];
    for (k, (json, field)) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("bad{k}.json"));
        fs::write(&cfg, json).unwrap();
        let o = dgsplit(&[
            "run", "--preset", "heat1d", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("x").to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2), "{json}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{json}: {}", stderr(&o));
    }
}

#[test]
fn run_rejects_method_all() {
    let o = dgsplit(&["run", "--method", "all", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
}

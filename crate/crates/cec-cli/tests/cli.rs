//! End-to-end tests for the `cec` binary: exit codes, stdout formats,
//! written artifacts, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8(output.stderr.clone()).expect("stderr is utf-8");
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr {text:?}: {e}"))
}

fn write_config(dir: &Path, name: &str, config: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, config.to_string()).expect("write config");
    path
}

/// Six machines with speeds 2, 2, 3, 3, 4, 4 losing one or two machines
/// per step; q auto-sizes to 630.
fn reference_config() -> serde_json::Value {
    serde_json::json!({
        "n": 6,
        "l": 3,
        "speeds": [2, 2, 3, 3, 4, 4],
        "events": [
            {"t": 1, "available": [1, 2, 3, 4, 5, 6]},
            {"t": 2, "available": [1, 2, 3, 5, 6]},
            {"t": 3, "available": [1, 2, 3, 5]},
            {"t": 4, "available": [2, 3, 5]}
        ],
        "r": 4,
        "seed": 11
    })
}

const REFERENCE_CSV: &str = "\
t,N_t,c_star_num,c_star_den,F,baseline_num,baseline_den,overlap_num,overlap_den,verified
1,6,1,6,4,1,4,0,1,true
2,5,1,5,4,3,10,67,90,true
3,4,2,7,3,3,8,71,105,true
4,3,1,2,1,1,2,17,21,true
";

#[test]
fn optimize_prints_exact_load_lines() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let output = cec(&["optimize", "--config", config.to_str().unwrap()]);
    assert!(output.status.success());
    assert_eq!(
        stdout(&output),
        "t=1 available=[1,2,3,4,5,6] k_star=6 c_star=1/6 mu=[1/3,1/3,1/2,1/2,2/3,2/3]\n\
         t=2 available=[1,2,3,5,6] k_star=5 c_star=1/5 mu=[2/5,2/5,3/5,4/5,4/5]\n\
         t=3 available=[1,2,3,5] k_star=3 c_star=2/7 mu=[4/7,4/7,6/7,1/1]\n\
         t=4 available=[2,3,5] k_star=1 c_star=1/2 mu=[1/1,1/1,1/1]\n"
    );
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &serde_json::json!({"n": 3, "l": 2, "speeds": [1, 1, 1], "events": [], "bogus": 1}),
    );
    let output = cec(&["optimize", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr_json(&output);
    assert_eq!(err["error"], "invalid-config");
    assert!(err["message"].as_str().unwrap().contains("unknown field `bogus`"));
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nonexistent.json");
    let output = cec(&["optimize", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_json(&output)["error"], "invalid-config");
}

#[test]
fn nonpositive_speed_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &serde_json::json!({"n": 3, "l": 2, "speeds": [2, 0, 1], "events": []}),
    );
    let output = cec(&["optimize", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr_json(&output);
    assert!(err["message"].as_str().unwrap().contains("machine 2"));
}

#[test]
fn undersized_event_exits_three_and_names_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &serde_json::json!({
            "n": 3, "l": 2, "speeds": [1, 1, 1],
            "events": [{"t": 7, "available": [2]}]
        }),
    );
    let output = cec(&["optimize", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
    let err = stderr_json(&output);
    assert_eq!(err["error"], "infeasible");
    assert_eq!(err["step"], 7);
    assert!(err["message"].as_str().unwrap().contains("t=7"));
}

#[test]
fn incompatible_row_count_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = reference_config();
    config["q"] = serde_json::json!(100);
    let config = write_config(dir.path(), "run.json", &config);
    let out = dir.path().join("out");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let err = stderr_json(&output);
    assert_eq!(err["error"], "infeasible");
    assert!(err["message"].as_str().unwrap().contains("630"));
}

#[test]
fn assign_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let out = dir.path().join("plans");
    let assign = cec(&[
        "assign",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(assign.status.success(), "{}", stdout(&assign));
    assert!(stdout(&assign).starts_with("rows=630\n"));
    for t in 1..=4 {
        assert!(out.join(format!("plan_t{t}.json")).is_file());
    }
    let verify = cec(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(verify.status.success(), "{}", stdout(&verify));
    assert!(stdout(&verify).contains("verification=pass (4 steps, 28 checks)"));
}

#[test]
fn verify_flags_a_tampered_plan() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let out = dir.path().join("plans");
    let assign = cec(&[
        "assign",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(assign.status.success());

    let plan_path = out.join("plan_t2.json");
    let mut plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    plan[0]["machines"] = serde_json::json!([2, 5, 6]);
    std::fs::write(&plan_path, plan.to_string()).unwrap();

    let verify = cec(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(verify.status.code(), Some(1));
    let text = stdout(&verify);
    assert!(text.contains("per-machine-load: FAIL"));
    assert!(text.contains("t=2 result=FAIL"));
    assert!(text.contains("verification=FAIL"));
    let err = stderr_json(&verify);
    assert_eq!(err["error"], "verification-failed");
    assert_eq!(err["step"], 2);
}

#[test]
fn simulate_writes_the_expected_step_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let out = dir.path().join("out");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stdout(&output));
    assert_eq!(
        std::fs::read_to_string(out.join("steps.csv")).unwrap(),
        REFERENCE_CSV
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 630);
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["steps"][1]["c_star"], "1/5");
    assert_eq!(summary["steps"][1]["baseline_reconstructed"], "3/10");
    assert_eq!(summary["steps"][3]["loads"][0]["mu"], "1/1");
    assert_eq!(summary["steps"][0]["blocks"].as_array().unwrap().len(), 4);
    let text = stdout(&output);
    assert!(text.contains("t=2 N_t=5 c_star=1/5 F=4 overlap=67/90 baseline_reconstructed=3/10 verified=true"));
}

#[test]
fn simulate_reruns_identically_from_the_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let first = dir.path().join("first");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("summary.json")).unwrap())
            .unwrap();
    let rerun_config = write_config(dir.path(), "rerun.json", &summary["config"]);
    let second = dir.path().join("second");
    let output = cec(&[
        "simulate",
        "--config",
        rerun_config.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    for name in ["steps.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs between the run and its rerun"
        );
    }
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", &reference_config());
    let out = dir.path().join("out");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    assert!(output.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 12);
    assert_eq!(summary["config"]["seed"], 12);
    assert_eq!(
        std::fs::read_to_string(out.join("steps.csv")).unwrap(),
        REFERENCE_CSV
    );
}

#[test]
fn zero_event_config_yields_a_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &serde_json::json!({"n": 3, "l": 2, "speeds": [1, 1, 1], "events": []}),
    );
    let out = dir.path().join("out");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_eq!(
        std::fs::read_to_string(out.join("steps.csv")).unwrap(),
        "t,N_t,c_star_num,c_star_den,F,baseline_num,baseline_den,overlap_num,overlap_den,verified\n"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"].as_array().unwrap().len(), 0);
}

#[test]
fn data_file_fixes_the_matrix_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("matrix.txt");
    std::fs::write(&data_path, "3\n1, 2, 3\n4, 5, 6\n7, 8, 9\n10, 11, 12\n").unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &serde_json::json!({
            "n": 3, "l": 2, "speeds": [1, 1, 2],
            "events": [{"t": 1, "available": [1, 2, 3]}],
            "data": data_path.to_str().unwrap()
        }),
    );
    let out = dir.path().join("out");
    let output = cec(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = stdout(&output);
    assert!(text.starts_with("rows=4 cols=3 seed=0\n"));
    assert!(text.contains("verified=true"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["q"], 4);
    assert_eq!(summary["config"]["r"], 3);
    assert_eq!(summary["config"]["data"], data_path.to_str().unwrap());
}

#[test]
fn out_dir_falls_back_to_the_config_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let mut config = reference_config();
    config["out_dir"] = serde_json::json!(out.to_str().unwrap());
    let config = write_config(dir.path(), "run.json", &config);
    let output = cec(&["assign", "--config", config.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(out.join("plan_t1.json").is_file());
}

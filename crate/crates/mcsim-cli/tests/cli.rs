//! End-to-end tests of every `mcsim` subcommand against the bundled
//! fixtures: exit codes, output stability, and artifact contents.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsim"))
        .args(args)
        .output()
        .expect("running mcsim")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// Per-test scratch directory under the system temp dir.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mcsim-cli-{}-{name}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("clearing scratch dir");
    }
    fs::create_dir_all(&dir).expect("creating scratch dir");
    dir
}

fn repo_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn simulate_multimode_on_the_overrun_script_is_clean() {
    let out = mcsim(&["simulate", "--taskset", "quartet", "--algo", "multimode", "--script", "overrun"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("hc_misses: 0"), "{text}");
    assert!(text.contains("system_mode_switches: 1"), "{text}");
}

#[test]
fn simulate_classic_fp_on_the_overrun_script_reports_the_miss() {
    let out = mcsim(&["simulate", "--taskset", "quartet", "--algo", "fp", "--script", "overrun"]);
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("hc_misses: 1"), "{text}");
    assert!(
        text.lines().any(|l| l.starts_with("task pi2:") && l.ends_with("max_lateness 1")),
        "{text}"
    );
}

#[test]
fn simulate_missing_taskset_is_an_input_error() {
    let out = mcsim(&["simulate", "--taskset", "/nonexistent.tasks", "--algo", "fp", "--script", "overrun"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("nonexistent"), "{}", stderr(&out));
}

#[test]
fn simulate_unknown_algorithm_is_an_input_error() {
    let out = mcsim(&["simulate", "--taskset", "quartet", "--algo", "edf", "--script", "overrun"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("unknown algorithm"), "{}", stderr(&out));
}

#[test]
fn simulate_demands_exactly_one_scenario_source() {
    let both = mcsim(&[
        "simulate", "--taskset", "quartet", "--algo", "fp", "--script", "overrun", "--overrun-p", "0.1",
        "--seed", "1",
    ]);
    assert_eq!(exit_code(&both), 2);
    let neither = mcsim(&["simulate", "--taskset", "quartet", "--algo", "fp"]);
    assert_eq!(exit_code(&neither), 2);
    let seed_only = mcsim(&["simulate", "--taskset", "quartet", "--algo", "fp", "--seed", "1"]);
    assert_eq!(exit_code(&seed_only), 2);
}

#[test]
fn simulate_outputs_are_byte_stable_for_a_fixed_seed() {
    let dir = scratch("stable");
    let trace_a = dir.join("a.csv");
    let trace_b = dir.join("b.csv");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--taskset".into(),
            "quartet".into(),
            "--algo".into(),
            "multimode".into(),
            "--overrun-p".into(),
            "0.2".into(),
            "--seed".into(),
            "42".into(),
            "--horizon".into(),
            "2000".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let a = Command::new(env!("CARGO_BIN_EXE_mcsim")).args(args(&trace_a)).output().unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_mcsim")).args(args(&trace_b)).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read(&trace_a).unwrap(), fs::read(&trace_b).unwrap());
    assert!(!fs::read(&trace_a).unwrap().is_empty());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_with_check_validates_its_own_trace() {
    let out = mcsim(&[
        "simulate", "--taskset", "quartet", "--algo", "multimode", "--overrun-p", "0.08", "--seed",
        "7", "--horizon", "4000", "--check",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(!stderr(&out).contains("violation"), "{}", stderr(&out));
    // The run actually exercised overruns rather than passing vacuously.
    assert!(
        !stdout(&out).contains("task_mode_switches: 0"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn simulate_writes_jsonl_traces_and_metrics_json() {
    let dir = scratch("artifacts");
    let trace = dir.join("trace.jsonl");
    let metrics = dir.join("metrics.json");
    let out = mcsim(&[
        "simulate",
        "--taskset",
        "quartet",
        "--algo",
        "multimode",
        "--script",
        "overrun",
        "--format",
        "jsonl",
        "--out",
        trace.to_str().unwrap(),
        "--metrics-out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let first = fs::read_to_string(&trace).unwrap();
    let first = first.lines().next().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(first).unwrap();
    assert!(parsed.get("t").is_some(), "{parsed}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["hc_misses"], 0);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_config_file_supplies_defaults_and_flags_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.json");
    fs::write(
        &cfg,
        r#"{"taskset": "quartet", "algo": "multimode", "script": "overrun", "horizon": 80}"#,
    )
    .unwrap();
    let from_file = mcsim(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&from_file), 0, "stderr: {}", stderr(&from_file));
    assert!(stdout(&from_file).contains("algorithm: multimode"));
    let overridden = mcsim(&["simulate", "--config", cfg.to_str().unwrap(), "--algo", "fp"]);
    assert_eq!(exit_code(&overridden), 3);
    assert!(stdout(&overridden).contains("algorithm: fp-classic"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_fresh_avionics_set_is_schedulable() {
    let dir = scratch("curve");
    let curve = dir.join("curve.csv");
    let out = mcsim(&[
        "analyze", "--taskset", "avionics", "--test", "normal", "--curve",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("verdict: schedulable"), "{text}");
    assert!(text.contains("pivot: pi5"), "{text}");
    let curve_text = fs::read_to_string(&curve).unwrap();
    assert!(curve_text.starts_with("pivot,t,z,demand,supply,schedulable\n"));
    assert!(curve_text.lines().count() > 2);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_overloaded_pair_reports_a_witness() {
    let dir = scratch("overload");
    let tasks = dir.join("pair.tasks");
    fs::write(&tasks, "time_scale 1\ntask h1 10 6 6 HC 1\ntask h2 10 6 6 HC 2\n").unwrap();
    let out = mcsim(&["analyze", "--taskset", tasks.to_str().unwrap(), "--test", "normal"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("verdict: unschedulable witness_z=10"), "{text}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_guard_mismatch_is_an_input_error() {
    let out = mcsim(&["analyze", "--taskset", "quartet", "--test", "critical"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("guard not met"), "{}", stderr(&out));
}

#[test]
fn analyze_accepts_a_snapshot_file() {
    let dir = scratch("snapshot");
    let snap = dir.join("snap.json");
    // Fresh state of quartet, spelled out as JSON.
    let rows: Vec<serde_json::Value> = [20u64, 20, 20, 20]
        .iter()
        .map(|&period| {
            serde_json::json!({
                "status": "Ready",
                "omega": "Lo",
                "lambda": 0,
                "release": 0,
                "abs_deadline": period,
                "next_release": period,
                "upcoming_periods": []
            })
        })
        .collect();
    let body = serde_json::json!({
        "t": 0,
        "mode": "Normal",
        "pattern": "Regular",
        "delta": 0,
        "rows": rows,
    });
    fs::write(&snap, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    let out = mcsim(&[
        "analyze", "--taskset", "quartet", "--test", "normal", "--snapshot",
        snap.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("verdict: schedulable"), "{}", stdout(&out));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn casestudy_emits_the_full_grid_and_dominance_check() {
    let dir = scratch("study");
    let csv = dir.join("study.csv");
    let out = mcsim(&[
        "casestudy", "--taskset", "quartet", "--seeds", "2", "--overrun-p", "0.2", "--horizon",
        "2000", "--out", csv.to_str().unwrap(), "--markdown",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let body = fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p,seed,algorithm,hc_misses,lc_misses,lc_released,lc_discarded,discard_rate,system_switches,task_switches,dem_evals"
    );
    assert_eq!(lines.count(), 8, "2 seeds x 4 algorithms");
    assert!(stderr(&out).contains("dominance: ok"), "{}", stderr(&out));
    assert!(stdout(&out).contains("| multimode |"), "{}", stdout(&out));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn export_writes_the_bundled_fixtures_verbatim() {
    let dir = scratch("export");
    let out = mcsim(&["export", "--dir", dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["quartet.tasks", "avionics.tasks", "overrun.script", "shrinkdemo.tasks"] {
        let exported = fs::read(dir.join(name)).unwrap();
        let source = fs::read(repo_fixture(name)).unwrap();
        assert_eq!(exported, source, "{name} differs from the repository copy");
    }
    // A second export without --force refuses to clobber.
    let again = mcsim(&["export", "--dir", dir.to_str().unwrap()]);
    assert_eq!(exit_code(&again), 2);
    let forced = mcsim(&["export", "--dir", dir.to_str().unwrap(), "--force"]);
    assert_eq!(exit_code(&forced), 0);
    fs::remove_dir_all(&dir).ok();
}

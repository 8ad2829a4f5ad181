use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netident(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netident")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in {text}"));
    line.split('=').nth(1).unwrap().split([',', ' ']).find(|t| !t.is_empty()).unwrap().parse().unwrap()
}

#[test]
fn staged_commands_reproduce_the_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--out-dir", s(d), "--d", "8", "--beta", "1.3", "--seed", "5"];

    let out = netident(&[&["generate"][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let teacher = d.join("teacher.txt");

    let out = netident(&[&["recover-weights", "--teacher", s(&teacher), "--dump-spectrum"][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout_value(&out, "max_weight_err") < 1e-4);
    assert!(d.join("spectrum.csv").is_file());
    assert!(d.join("spm_log.csv").is_file());

    let weights = d.join("weights.txt");
    let out = netident(&[&["init-shifts", "--teacher", s(&teacher), "--weights", s(&weights)][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("init.txt").is_file());

    let init = d.join("student_init.txt");
    let out = netident(&[&["refine", "--teacher", s(&teacher), "--student", s(&init), "--lr", "auto"][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(d.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("step,loss,shift_err"));

    let student = d.join("student.txt");
    let out = netident(&[&["diagnose", "--teacher", s(&teacher), "--student", s(&student), "--alpha-samples", "100"][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout_value(&out, "omega") > 0.0);
    assert!(stdout_value(&out, "E_inf") < 1e-3);
    assert_eq!(stdout_value(&out, "sign_accuracy"), 1.0);
}

#[test]
fn pipeline_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = netident(&["pipeline", "--out-dir", s(dir.path()), "--d", "8", "--beta", "1.3", "--seed", "11"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["result.csv", "student.txt", "weights.txt", "config.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "[teacher]\nd = 8\nbeta = 1.3\n[run]\nseed = 2\n").unwrap();
    let out = netident(&["pipeline", "--config", s(&cfg), "--seed", "3", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(written.contains("seed = 3"), "{written}");
    assert!(written.contains("d = 8"), "{written}");
}

#[test]
fn study_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = netident(&["study", "--grid-d", "6,8", "--grid-beta", "1.2", "--reps", "2", "--workers", "2", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn baseline_runs_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = netident(&["baseline", "--d", "6", "--beta", "1.2", "--baseline-epochs", "5", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("baseline_trace.csv")).unwrap();
    assert!(trace.lines().count() >= 2);
}

#[test]
fn invalid_input_exits_with_two() {
    assert_eq!(netident(&["pipeline", "--d", "0"]).status.code(), Some(2));
    assert_eq!(netident(&["pipeline", "--beta", "abc"]).status.code(), Some(2));
    assert_eq!(netident(&["pipeline", "--no-such-flag", "1"]).status.code(), Some(2));
    assert_eq!(netident(&["refine", "--teacher", "missing.txt", "--student", "missing.txt"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[teacher]\nwidth = 3\n").unwrap();
    assert_eq!(netident(&["pipeline", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_with_three_and_keeps_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = netident(&["pipeline", "--d", "10", "--spm-restarts", "1", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spm"));
    assert!(dir.path().join("error.txt").is_file());
    assert!(dir.path().join("weights_partial.txt").is_file());
    assert!(dir.path().join("teacher.txt").is_file());
}

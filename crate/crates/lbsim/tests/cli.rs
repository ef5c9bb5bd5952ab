//! Command-line driver checks: flags, exit codes, and output layout,
//! exercised against the real binary.

use std::path::Path;
use std::process::{Command, Output};

const CSV_FILES: [&str; 4] = ["utilization.csv", "overload.csv", "summary.csv", "ratio.csv"];

fn lbsim(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lbsim"));
    cmd.args(args);
    // Keep the environment from steering output locations unless a test
    // opts in explicitly.
    cmd.env_remove("LBSIM_OUT");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary spawns");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A scenario that finishes in well under a second.
fn short_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("short.lbs");
    std::fs::write(&path, "preset: maxcap-hetero-80\nduration: 20\n").expect("write scenario");
    path
}

fn assert_csvs_in(dir: &Path) {
    for name in CSV_FILES {
        let path = dir.join(name);
        assert!(path.is_file(), "missing {}", path.display());
        assert!(
            std::fs::metadata(&path).expect("metadata").len() > 0,
            "{} is empty",
            path.display()
        );
    }
}

#[test]
fn preset_run_writes_csvs_and_a_summary_line() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let scenario = short_scenario(tmp.path());
    let out_dir = tmp.path().join("results");
    let out = run_ok(lbsim(&[scenario.to_str().unwrap()]).args(["--out", out_dir.to_str().unwrap()]));
    assert_csvs_in(&out_dir);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1, "one summary line per run");
    assert!(stdout.contains("maxcap"), "summary names the strategy: {stdout}");
    assert!(stdout.contains("generated="), "summary reports totals: {stdout}");
}

#[test]
fn unknown_preset_fails_with_exit_code_1() {
    let out = lbsim(&["--preset", "nosuch"]).output().expect("binary spawns");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown preset"), "stderr was: {stderr}");
}

#[test]
fn list_presets_prints_the_full_catalog() {
    let out = run_ok(&mut lbsim(&["--list-presets"]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let names: Vec<&str> = stdout.lines().collect();
    assert_eq!(names.len(), 12, "catalog: {names:?}");
    for required in [
        "invload-hetero-80",
        "availcap-hetero-80",
        "maxcap-hetero-80",
        "pareto-availcap",
        "pareto-maxcap",
        "dynamic-1-60",
        "dynamic-5-60",
        "xload-maxcap-u1",
        "xload-maxcap-u10",
        "xload-availcap-u1",
        "homog-invload",
        "homog-maxcap",
    ] {
        assert!(names.contains(&required), "missing preset {required}");
    }
}

#[test]
fn repeat_writes_one_seeded_subdirectory_per_run() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let scenario = short_scenario(tmp.path());
    let out_dir = tmp.path().join("batch");
    run_ok(lbsim(&[scenario.to_str().unwrap()]).args([
        "--seed",
        "7",
        "--repeat",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    for (index, seed) in [(0, 7), (1, 8), (2, 9)] {
        let run_dir = out_dir.join(format!("run-{index:03}"));
        assert_csvs_in(&run_dir);
        let summary = std::fs::read_to_string(run_dir.join("summary.csv")).expect("summary.csv");
        assert!(
            summary.contains(&format!("maxcap,{seed},")),
            "run {index} should use seed {seed}: {summary}"
        );
    }
}

#[test]
fn env_var_supplies_the_default_output_root() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let scenario = short_scenario(tmp.path());
    let out_dir = tmp.path().join("from-env");
    run_ok(lbsim(&[scenario.to_str().unwrap()]).env("LBSIM_OUT", &out_dir));
    assert_csvs_in(&out_dir);
}

#[test]
fn unwritable_output_directory_fails_with_exit_code_2() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let scenario = short_scenario(tmp.path());
    // A regular file where the output directory should go.
    let blocker = tmp.path().join("occupied");
    std::fs::write(&blocker, "not a directory").expect("write blocker");
    let out = lbsim(&[scenario.to_str().unwrap()])
        .args(["--out", blocker.to_str().unwrap()])
        .output()
        .expect("binary spawns");
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("output directory"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn malformed_scenario_fails_with_exit_code_1_and_a_line_number() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let path = tmp.path().join("broken.lbs");
    std::fs::write(&path, "strategy: maxcap\nthis line has no colon\n").expect("write scenario");
    let out = lbsim(&[path.to_str().unwrap()]).output().expect("binary spawns");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn missing_input_fails_with_exit_code_1() {
    let out = lbsim(&[]).output().expect("binary spawns");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("scenario"), "stderr: {stderr}");
}

#[test]
fn audit_mode_completes_cleanly() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let scenario = short_scenario(tmp.path());
    let out_dir = tmp.path().join("audited");
    run_ok(lbsim(&[scenario.to_str().unwrap()]).args([
        "--audit",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_csvs_in(&out_dir);
}

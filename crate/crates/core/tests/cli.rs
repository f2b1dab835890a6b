use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hostrep::fixture::{generate_fixture, FixtureParams};

fn hostrep(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hostrep"));
    cmd.args(args).env_remove("HOSTREP_OUTPUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(dir: &Path) {
    generate_fixture(&FixtureParams::default(), dir).unwrap();
}

#[test]
fn validate_accepts_fixture_and_rejects_zero_feeds() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let cfg = dir.path().join("config.toml");
    let o = hostrep(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(&cfg).unwrap();
    let no_feeds = text.split("[[feeds]]").next().unwrap();
    let bad = dir.path().join("nofeeds.toml");
    fs::write(&bad, no_feeds).unwrap();
    let o = hostrep(&["validate", bad.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least one feed"));

    let missing = dir.path().join("missing.toml");
    fs::write(&missing, text.replace("pdns.csv", "nowhere.csv")).unwrap();
    assert_eq!(code(&hostrep(&["validate", missing.to_str().unwrap()], &[])), 1);
}

#[test]
fn run_honours_output_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = dir.path().join("elsewhere");
    let o = hostrep(
        &["run", dir.path().join("config.toml").to_str().unwrap(), "--single-threaded"],
        &[("HOSTREP_OUTPUT_DIR", &out)],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("scores_occurrence.csv").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let routing = dir.path().join("routing.csv");
    let mut text = fs::read_to_string(&routing).unwrap();
    text.push_str("300.0.0.0/8,5\n");
    fs::write(&routing, text).unwrap();
    let o = hostrep(&["run", dir.path().join("config.toml").to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[ingestion]") && err.contains("routing.csv"), "{err}");
}

#[test]
fn fixture_subcommand_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    let o = hostrep(&["fixture", "--seed", "42", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert!(out.join("manifest.toml").is_file());
    let o = hostrep(&["fixture", "--seed", "1", "--providers", "1", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&hostrep(&["frobnicate"], &[])), 1);
    assert_eq!(code(&hostrep(&["--help"], &[])), 0);
}

#[test]
fn sensitivity_subcommand_prints_suite() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = hostrep(&["sensitivity", dir.path().join("config.toml").to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 6, "{stdout}");
    assert!(stdout.contains("ip_only_unit"));
}

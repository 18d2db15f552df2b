use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crosswidth")).args(args).output().unwrap()
}

#[test]
fn analyze_succeeds_on_f0() {
    let out = run(&["analyze", config("f0.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with('{') && text.contains("\"vertex_count\":4"));
}

#[test]
fn harmonic_fails_validation() {
    let out = run(&["analyze", config("harmonic.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_two() {
    let out = run(&["bs", "/nonexistent.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.toml"));
}

#[test]
fn bad_h_list_is_a_usage_error() {
    let out = run(&["bs", config("f0.toml").to_str().unwrap(), "--h-list", "0.01,0.05"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let out = run(&["frobnicate", config("f0.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_and_csv_files() {
    let dir = std::env::temp_dir().join(format!("crosswidth-bin-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (json, csv) = (dir.join("c.json"), dir.join("c.csv"));
    let out = run(&[
        "compare",
        config("simple.toml").to_str().unwrap(),
        "--h-list",
        "0.05,0.04,0.03,0.02",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(out.stdout.is_empty());
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("h,seed,pseudo_re,pseudo_im,D,im_pred,im_oracle,im_green,ratio\n"));
    assert_eq!(table.lines().count(), 5);
    assert!(std::fs::read_to_string(&json).unwrap().contains("\"expected_slope\""));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn runs_are_byte_identical() {
    let cfg = config("f1.toml");
    let args = ["pseudo", cfg.to_str().unwrap(), "--h", "0.05"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

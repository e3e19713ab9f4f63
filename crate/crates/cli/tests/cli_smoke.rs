//! End-to-end checks of the binary: exit codes, direct modes, and the
//! guarantee that a full `run` writes the same bytes as running the
//! stages one by one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_demand-pulse"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn demand-pulse");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Every file under `root`, keyed by relative path.
fn file_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["dtw", "--help"][..]] {
        let out = bin().args(args).output().expect("spawn");
        assert_eq!(out.status.code(), Some(0), "{args:?}");
    }
}

#[test]
fn missing_trips_input_fails_before_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let study = fixture("study");
    let out_dir = dir.path().join("out");
    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "[inputs]\ntrips = \"{missing}\"\nepidemic = \"{e}\"\nvaccination = \"{v}\"\nzones = \"{z}\"\n[output]\ndir = \"{o}\"\n",
            missing = dir.path().join("no_such_trips.csv").display(),
            e = study.join("epidemic.csv").display(),
            v = study.join("vaccination.csv").display(),
            z = study.join("zones.csv").display(),
            o = out_dir.display(),
        ),
    )
    .unwrap();

    let out = bin()
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("trips"), "stderr: {stderr}");
    assert!(stderr.contains("no_such_trips.csv"), "stderr: {stderr}");
    assert!(!out_dir.exists(), "nothing should be written on a config error");
}

#[test]
fn analysis_stage_without_ingest_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("study").join("config.toml");
    let out = bin()
        .args([
            "correlate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("fresh").to_str().unwrap(),
        ])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest"), "stderr: {stderr}");
}

#[test]
fn mixing_stage_and_direct_dtw_flags_is_a_usage_error() {
    let out = bin()
        .args(["dtw", "--config", "x.toml", "--query", "q.csv"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["dtw"]).output().expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--query"), "stderr: {stderr}");
}

#[test]
fn tlcc_direct_mode_recovers_a_three_day_lead() {
    let out = run_ok(&[
        "tlcc",
        "--x",
        fixture("series_shift/shifted.csv").to_str().unwrap(),
        "--y",
        fixture("series_shift/base.csv").to_str().unwrap(),
        "--max-offset",
        "6",
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["best_offset"], 3, "summary: {summary}");
    assert_eq!(summary["x_label"], "shifted");
    assert!(summary["verdict"].as_str().unwrap().contains("leads"));
}

#[test]
fn dtw_direct_mode_gives_zero_distance_for_identical_series() {
    let base = fixture("series_shift/base.csv");
    let out = run_ok(&[
        "dtw",
        "--query",
        base.to_str().unwrap(),
        "--reference",
        base.to_str().unwrap(),
    ]);
    let result = stdout_json(&out);
    assert_eq!(result["distance"], 0.0, "result: {result}");
    assert_eq!(result["path_length"], 40);
    assert_eq!(result["normalization"], "zscore");
}

#[test]
fn full_run_writes_the_same_bytes_as_stagewise_execution() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("study").join("config.toml");
    let cfg = config.to_str().unwrap();
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");

    run_ok(&["run", "--config", cfg, "--out", full.to_str().unwrap()]);
    for stage in ["ingest", "correlate", "dtw", "tlcc", "spatial", "report"] {
        run_ok(&[stage, "--config", cfg, "--out", staged.to_str().unwrap()]);
    }

    let full_tree = file_tree(&full);
    let staged_tree = file_tree(&staged);
    for (path, bytes) in &staged_tree {
        let full_bytes = full_tree
            .get(path)
            .unwrap_or_else(|| panic!("{path} missing from the full run"));
        assert_eq!(full_bytes, bytes, "{path} differs between run modes");
    }
    let extras: Vec<&String> = full_tree
        .keys()
        .filter(|k| !staged_tree.contains_key(*k))
        .collect();
    assert_eq!(extras, vec!["manifest.json"], "only the manifest should be run-only");
}

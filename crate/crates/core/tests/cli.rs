use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use said_core::corpus::manifest::read_manifest;
use said_core::harness::{ExperimentReport, PREPARED_DIR};
use said_core::semantics::EntryKind;

const TINY: &str = r#"
[data]
kind = "synthetic"

[synthetic]
users = 40
items = 20
positives_per_user = 6

[encoder]
dim = 64

[grid]
noise = [0.2]
alpha = [0.4, 1.0]
seeds = [0, 1]

[train]
embedding_dim = 4
hidden = [8]
batch_size = 32
max_epochs = 2
"#;

fn said(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_said"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, format!("{TINY}\n[output]\ndir = \"out\"\n")).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn prepare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&said(&["prepare", "-c", cfg])), 0);
    let prepared = dir.path().join("out").join(PREPARED_DIR);
    let first: Vec<(PathBuf, Vec<u8>)> = snapshot(&prepared);
    assert!(first.len() >= 8, "{first:?}");
    assert_eq!(code(&said(&["prepare", "-c", cfg])), 0);
    assert_eq!(first, snapshot(&prepared));

    let rows = read_manifest(&prepared.join("manifest.tsv")).unwrap();
    assert_eq!(rows.iter().filter(|r| r.kind == EntryKind::Item).count(), 20);
    assert!(rows.iter().any(|r| r.kind == EntryKind::Profile));
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = said(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("auc_rel_change"), "{stdout}");

    let root = dir.path().join("out");
    let report = ExperimentReport::load(&root.join("report.json")).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.failures(), 0);
    assert_eq!(report.provenance.config_hash.len(), 64);

    let tables = ["noise_sweep.csv", "alpha_sweep.csv", "method_comparison.csv"];
    let before: Vec<String> = tables.iter().map(|t| fs::read_to_string(root.join(t)).unwrap()).collect();
    let again = dir.path().join("again");
    let out = said(&["report", root.join("report.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for (t, b) in tables.iter().zip(&before) {
        assert_eq!(&fs::read_to_string(again.join(t)).unwrap(), b, "{t}");
    }
}

#[test]
fn stale_prepared_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&said(&["prepare", "-c", cfg])), 0);
    let out = said(&["run", "-c", cfg, "--set", "synthetic.seed=99"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&said(&["prepare", "-c", cfg, "--set", "train.no_such_key=1"])), 2);
    assert_eq!(code(&said(&["prepare", "-c", cfg, "--set", "weights.alpha=1.5"])), 2);
    assert_eq!(code(&said(&["prepare", "-c", "/nonexistent/said.toml"])), 2);
    assert_eq!(code(&said(&["report", "/nonexistent/report.json"])), 2);
}

#[test]
fn gradcheck_exit_codes() {
    let out = said(&["gradcheck", "--points", "3"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    // an impossible tolerance is a check failure, not a setup error
    assert_eq!(code(&said(&["gradcheck", "--points", "1", "--tolerance", "0"])), 1);
}

#[test]
fn weights_audit_reports_origins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let audit = dir.path().join("audit.tsv");
    let out = said(&[
        "weights-audit",
        "-c",
        cfg.to_str().unwrap(),
        "--noise",
        "0.3",
        "--out",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mu ") && stdout.contains("injected_noise"), "{stdout}");
    assert!(fs::read_to_string(audit).unwrap().lines().count() > 1);
}

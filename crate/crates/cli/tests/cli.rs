use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/mini-corpus")
}

fn skillguard(dir: &Path, args: &[&str]) -> Output {
    let store = dir.join("store");
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_skillguard"))
        .arg("--store")
        .arg(&store)
        .arg("--out")
        .arg(&out)
        .args(args)
        .output()
        .unwrap()
}

fn with_config(dir: &Path, args: &[&str]) -> Output {
    let config = corpus().join("skillguard.toml");
    let mut all = vec!["--config", config.to_str().unwrap()];
    all.extend_from_slice(args);
    skillguard(dir, &all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_run_prints_the_golden_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config(dir.path(), &["run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = fs::read_to_string(corpus().join("golden/summary.txt")).unwrap();
    assert!(stdout(&o).ends_with(&golden), "{}", stdout(&o));
    for stage in [
        "ingest:",
        "analyze:",
        "scan:",
        "features:",
        "flag:",
        "context:",
        "agree:",
        "hijack:",
        "report:",
    ] {
        assert!(stdout(&o).lines().any(|l| l.starts_with(stage)), "no {stage} line");
    }
    assert_eq!(fs::read_to_string(dir.path().join("out/summary.txt")).unwrap(), golden);
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    for stage in [
        "ingest", "analyze", "scan", "features", "flag", "context", "agree", "hijack", "report",
    ] {
        let o = with_config(dir.path(), &[stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let golden = fs::read_to_string(corpus().join("golden/summary.txt")).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("out/summary.txt")).unwrap(), golden);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(with_config(dir.path(), &["ingest"]).status.success());
    let report = dir.path().join("elsewhere/report.jsonl");
    let config = corpus().join("skillguard.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_skillguard"))
        .arg("--config")
        .arg(&config)
        .arg("--store")
        .arg(dir.path().join("store"))
        .arg("--out")
        .arg(&report)
        .arg("scan")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 29);

    let index = dir.path().join("one.jsonl");
    let first = fs::read_to_string(corpus().join("index.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    fs::write(&index, first + "\n").unwrap();
    let o = with_config(dir.path(), &["ingest", "--index", index.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"entries\":1"), "{}", stdout(&o));
}

#[test]
fn empty_store_scans_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = skillguard(dir.path(), &["scan"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"skills\":0"));
    assert_eq!(fs::read_to_string(dir.path().join("out/scan.jsonl")).unwrap(), "");
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = skillguard(dir.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: config:"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown = 1\n").unwrap();
    let o = skillguard(dir.path(), &["--config", bad.to_str().unwrap(), "report"]);
    assert_eq!(o.status.code(), Some(1));

    let o = skillguard(dir.path(), &["features", "--backend", "remote"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stage_failures_exit_with_their_stage_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let o = skillguard(
        dir.path(),
        &["ingest", "--index", missing.to_str().unwrap(), "--forge-root", "."],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = skillguard(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(8), "{}", stderr(&o));
}

#[test]
fn rejects_unknown_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let o = skillguard(dir.path(), &["scan", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = skillguard(dir.path(), &["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("hijack"));
}

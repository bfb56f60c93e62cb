use std::path::Path;
use std::process::{Command, Output};

fn dualchain(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualchain"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DUALCHAIN_ENDPOINT")
        .env_remove("DUALCHAIN_API_KEY")
        .env_remove("DUALCHAIN_CACHE")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth(dir: &Path) {
    let o = dualchain(&["--seed", "7", "synth", "--out", "corpus", "--series", "1", "--episodes", "2"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = dualchain(&["validate", "corpus"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));
}

#[test]
fn validate_reports_broken_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let q = dir.path().join("corpus/questions.jsonl");
    let text = std::fs::read_to_string(&q).unwrap();
    let first = text.lines().next().unwrap().to_string();
    std::fs::write(&q, format!("{text}{first}\n")).unwrap();
    let o = dualchain(&["validate", "corpus"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dualchain(&["eval", "--no-such-flag"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn mock_eval_writes_artifacts_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let args = [
        "--mock-rules",
        "corpus/mock_rules.json",
        "--cache-dir",
        "cache",
        "--mode",
        "pcdcot",
        "--format",
        "json",
        "eval",
        "--corpus",
        "corpus",
        "--runs-dir",
        "runs",
        "--split",
        "all",
    ];
    let first = dualchain(&args, dir.path());
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    for f in ["records.jsonl", "report.json", "report.md"] {
        assert!(runs[0].join(f).is_file(), "{f}");
    }
    let report = std::fs::read(runs[0].join("report.json")).unwrap();
    std::fs::remove_file(runs[0].join("records.jsonl")).unwrap();

    let second = dualchain(&args, dir.path());
    assert_eq!(code(&second), 0);
    assert_eq!(std::fs::read(runs[0].join("report.json")).unwrap(), report);
    assert_eq!(first.stdout, second.stdout);

    let shown = dualchain(&["report", runs[0].to_str().unwrap()], dir.path());
    assert_eq!(code(&shown), 0);
    assert!(String::from_utf8_lossy(&shown.stdout).contains("| Method |"));
}

#[test]
fn unreachable_backend_fails_with_partial_records() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let url = format!("http://127.0.0.1:{port}/v1");
    let o = dualchain(
        &[
            "--backend",
            &url,
            "--concurrency",
            "2",
            "eval",
            "--corpus",
            "corpus",
            "--runs-dir",
            "runs",
            "--split",
            "all",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    let run = std::fs::read_dir(dir.path().join("runs")).unwrap().next().unwrap().unwrap().path();
    let records = std::fs::read_to_string(run.join("records.jsonl")).unwrap();
    assert!(records.lines().count() > 0);
    assert!(records.lines().all(|l| l.contains("\"error\"")));
}

#[test]
fn baseline_prints_json_row() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dualchain(&["synth", "--out", "corpus"], dir.path())), 0);
    let o = dualchain(&["--seed", "3", "baseline", "--corpus", "corpus", "--kind", "frequent"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "frequent");
}

#[test]
fn transform_appends_generated_questions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let before = std::fs::read_to_string(dir.path().join("corpus/questions.jsonl")).unwrap().lines().count();
    let o = dualchain(
        &[
            "--mock-rules",
            "corpus/mock_rules.json",
            "transform",
            "--corpus",
            "corpus",
            "--distractors",
            "3",
            "--audit",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let after = std::fs::read_to_string(dir.path().join("corpus/questions.jsonl")).unwrap().lines().count();
    assert!(after > before);
    assert!(String::from_utf8_lossy(&o.stdout).contains("audit:"));
    assert_eq!(code(&dualchain(&["validate", "corpus"], dir.path())), 0);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chain-reasoner");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CHAIN_REASONER_BACKEND")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_fixture_is_clean() {
    let corpus = fixture("sample_chains.jsonl");
    let o = run(&["validate", p(&corpus)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("4"));
}

#[test]
fn validate_rejects_short_chain_in_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let line = fs::read_to_string(fixture("sample_chains.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let mut v: serde_json::Value = serde_json::from_str(&line).unwrap();
    v["chain"].as_array_mut().unwrap().truncate(2);
    fs::write(&bad, format!("{v}\n")).unwrap();
    assert_eq!(code(&run(&["validate", p(&bad)])), 1);
    assert_eq!(code(&run(&["validate", "--mode", "lenient", p(&bad)])), 0);
}

#[test]
fn combine_reproduces_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("full.csv");
    let o = run(&[
        "combine",
        "--mul-table",
        p(&fixture("mul_table.csv")),
        "--classifier-table",
        p(&fixture("classifier_table.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let expected = fs::read_to_string(fixture("full_accuracy_expected.csv")).unwrap();
    let printed = stdout(&o);
    for row in expected.lines().skip(1) {
        let line = row.split(',').collect::<Vec<_>>().join("\t");
        assert!(printed.lines().any(|l| l == line), "{printed}\nmissing {line}");
    }
    assert!(dir.path().join("full.csv.manifest.json").exists());
}

#[test]
fn evaluate_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("sample_chains.jsonl");
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "1", "8"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = run(&[
            "evaluate",
            p(&corpus),
            "--entailment-backend",
            "mock:hash",
            "--otd-backend",
            "mock:hash",
            "--parallel",
            workers,
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    let mut names: Vec<_> = fs::read_dir(&outputs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let csvs = names.iter().filter(|n| n.to_string_lossy().ends_with(".csv")).count();
    assert!(csvs >= 6, "{names:?}");
    for name in names.iter().filter(|n| *n != "manifest.json") {
        let a = fs::read(outputs[0].join(name)).unwrap();
        for other in &outputs[1..] {
            assert_eq!(a, fs::read(other.join(name)).unwrap(), "{name:?} differs");
        }
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/step_scores_plain.csv");
    assert_eq!(
        fs::read(golden).unwrap(),
        fs::read(outputs[0].join("step_scores_plain.csv")).unwrap()
    );
}

#[test]
fn unreachable_backend_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "score",
        p(&fixture("sample_chains.jsonl")),
        "--backend",
        "url:127.0.0.1:1",
        "--out",
        p(&dir.path().join("s.jsonl")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&run(&["validate", "--no-such-flag", "x"])), 64);
    assert_eq!(
        code(&run(&["score", p(&fixture("sample_chains.jsonl")), "--out", "x.jsonl"])),
        64
    );
    assert_eq!(code(&run(&["frobnicate"])), 64);
}

#[test]
fn help_lists_flags() {
    let o = run(&["evaluate", "--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for flag in [
        "--entailment-backend",
        "--otd-backend",
        "--variant",
        "--parallel",
        "--timeout-secs",
        "--out",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "score",
        "/nonexistent/c.jsonl",
        "--backend",
        "mock:hash",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn score_uses_env_backend_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.jsonl");
    let o = Command::new(BIN)
        .args([
            "score",
            p(&fixture("sample_chains.jsonl")),
            "--variant",
            "both",
            "--out",
            p(&out),
        ])
        .env("CHAIN_REASONER_BACKEND", "mock:hash")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = fs::read_to_string(&out).unwrap();
    assert_eq!(body.lines().count(), 8);
    let first: serde_json::Value = serde_json::from_str(body.lines().next().unwrap()).unwrap();
    assert_eq!(first["variant"], "plain");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scores.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "score");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn conformance_passes_against_mock_subprocess() {
    let spec = format!("cmd:{BIN} mock-backend");
    let o = run(&["conformance", "--backend", &spec]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn score_over_subprocess_matches_in_process_mock() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let corpus = fixture("sample_chains.jsonl");
    let spec = format!("cmd:{BIN} mock-backend");
    assert_eq!(
        code(&run(&["score", p(&corpus), "--backend", "mock:hash", "--out", p(&a)])),
        0
    );
    let o = run(&[
        "score",
        p(&corpus),
        "--backend",
        &spec,
        "--parallel",
        "4",
        "--out",
        p(&b),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn probe_with_votes_reports_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.csv");
    let mut csv = String::from("item_id,annotator_id,label\n");
    for item in 1..=4 {
        for ann in 1..=5 {
            let label = if item <= 3 && ann <= 3 { "1" } else { "0" };
            csv.push_str(&format!("{item},{ann},{label}\n"));
        }
    }
    fs::write(&votes, csv).unwrap();
    let out = dir.path().join("probe.jsonl");
    let report = dir.path().join("coverage.json");
    let o = run(&[
        "probe",
        p(&fixture("knowledge.txt")),
        "--backend",
        "mock:hash",
        "--votes",
        p(&votes),
        "--out",
        p(&out),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("covered 3/4 (75.0%)"), "{}", stdout(&o));
    let records = fs::read_to_string(&out).unwrap();
    assert_eq!(records.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert!(first["explanation"].as_str().unwrap().starts_with("Because "));
    assert!(report.exists());
}

#[test]
fn probe_report_requires_votes() {
    let o = run(&[
        "probe",
        p(&fixture("knowledge.txt")),
        "--backend",
        "mock:hash",
        "--out",
        "x",
        "--report",
        "y",
    ]);
    assert_eq!(code(&o), 64);
}

#[test]
fn categorize_writes_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("attrs.txt");
    fs::write(
        &input,
        "I am a teacher.\nMy favorite color is blue.\nI have two dogs.\nI like hiking.\n",
    )
    .unwrap();
    let out = dir.path().join("attrs.jsonl");
    let hist = dir.path().join("hist.csv");
    let o = run(&["categorize", p(&input), "--out", p(&out), "--histogram", p(&hist)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
    let h = fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("level,label,count"));
    assert!(stdout(&o).contains("total\t4"));
    assert_eq!(
        code(&run(&[
            "categorize",
            p(&input),
            "--out",
            p(&out),
            "--sample-per-category",
            "1"
        ])),
        64
    );
}

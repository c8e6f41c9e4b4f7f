use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cli(args: &[&str]) -> Output {
    let fx = fixtures();
    Command::new(env!("CARGO_BIN_EXE_persona-rag"))
        .arg("--workdir")
        .arg(&fx)
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().unwrap()).unwrap()
}

fn error_json(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["exit_code"], code);
    v
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn ingest(dir: &Path) -> PathBuf {
    let out = dir.join("stories.jsonl");
    let summary = ok_json(&cli(&[
        "ingest", "--urls", "stories/urls.csv", "--html", "stories/html", "--patches", "stories/patches", "--out", &s(&out),
    ]));
    assert_eq!(summary["stories"], 24);
    out
}

#[test]
fn evaluate_reproduces_the_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mcnemar.csv");
    let v = ok_json(&cli(&["evaluate", "--judgments", "judgments.csv", "--out", &s(&dir.path().join("r.json")), "--csv", &s(&csv)]));
    let p: Vec<&str> = v["metrics"].as_array().unwrap().iter().map(|m| m["p_value"].as_str().unwrap()).collect();
    assert_eq!(p, ["0.0063", "0.6250", "0.2500"]);
    assert_eq!(v["metrics"][0]["statistic"], 1.0);
    assert_eq!(v["metrics"][0]["table"], serde_json::json!([3, 11, 1, 0]));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
}

#[test]
fn evaluate_rejects_bad_input() {
    error_json(&cli(&["evaluate", "--judgments", "missing.csv"]), 3);
    error_json(&cli(&["evaluate", "--judgments", "judgments.csv", "--policy", "bayes"]), 2);
    error_json(&cli(&["evaluate", "--judgments", "judgments.csv", "--alpha", "1.5"]), 2);
    error_json(&cli(&["evaluate", "--judgments", "survey.csv"]), 2);
}

#[test]
fn survey_summary() {
    let out = cli(&["survey", "--survey", "survey.csv", "--positive", "usefulness=somewhat,mostly,perfectly"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["proportions"]["usefulness"]["rounded"], "0.8182");
    let initial = v["questions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["round"] == "initial" && q["question_id"] == "accuracy")
        .unwrap();
    assert_eq!(initial["mean_rating"], 5.875);
}

#[test]
fn generate_needs_exactly_three_examples() {
    let dir = tempfile::tempdir().unwrap();
    let stories = ingest(dir.path());
    let two = dir.path().join("two");
    std::fs::create_dir(&two).unwrap();
    for f in ["example-1.json", "example-2.json"] {
        std::fs::copy(fixtures().join("examples").join(f), two.join(f)).unwrap();
    }
    let out = dir.path().join("records.jsonl");
    let err = error_json(
        &cli(&["generate", "--stories", &s(&stories), "--examples", &s(&two), "--strategy", "few_shot", "--out", &s(&out)]),
        2,
    );
    assert_eq!(err["error"]["code"], "wrong_example_count");
    assert!(!out.exists());

    // chain-of-thought alone needs no examples
    let v = ok_json(&cli(&["generate", "--stories", &s(&stories), "--strategy", "cot", "--out", &s(&out)]));
    assert_eq!(v["records"], 24);
    error_json(&cli(&["generate", "--stories", &s(&stories), "--strategy", "zero_shot", "--out", &s(&out)]), 2);
}

#[test]
fn generate_is_deterministic_with_a_fixed_clock() {
    let dir = tempfile::tempdir().unwrap();
    let stories = ingest(dir.path());
    let run = |name: &str, parallel: &str| {
        let out = dir.path().join(name);
        let v = ok_json(&cli(&[
            "--fixed-time", "2024-05-01T00:00:00Z", "generate", "--stories", &s(&stories), "--examples", "examples",
            "--out", &s(&out), "--parallel", parallel,
        ]));
        assert_eq!(v["records"], 48);
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("a.jsonl", "1"), run("b.jsonl", "3"));
}

#[test]
fn generation_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let stories = ingest(dir.path());
    // a replay script that matches none of the prompts
    let script = dir.path().join("script.jsonl");
    std::fs::write(&script, "{\"messages_hash\": \"0000\", \"response\": \"{}\"}\n").unwrap();
    let out = cli(&[
        "--set", "llm.backend=replay", "--set", &format!("llm.script={}", s(&script)),
        "generate", "--stories", &s(&stories), "--strategy", "cot", "--out", &s(&dir.path().join("r.jsonl")),
    ]);
    let err = error_json(&out, 4);
    assert_eq!(err["error"]["code"], "generation_failed");
}

#[test]
fn index_then_chat_answers_with_citations() {
    let dir = tempfile::tempdir().unwrap();
    let stories = ingest(dir.path());
    let idx = dir.path().join("index.bin");
    let v = ok_json(&cli(&["index", "--personas", "personas", "--general", "general", "--stories", &s(&stories), "--out", &s(&idx)]));
    assert_eq!(v["by_category"]["persona"], 5);
    assert_eq!(v["by_category"]["success_story"], 24);

    let transcript = |name: &str| {
        let t = dir.path().join(name);
        let out = cli(&["chat", "--index", &s(&idx), "--queries", "queries.txt", "--out", &s(&t)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).matches("Q: ").count(), 10);
        std::fs::read_to_string(t).unwrap()
    };
    let first = transcript("t1.jsonl");
    assert_eq!(first, transcript("t2.jsonl"));
    for line in first.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let cites = v["citations"].as_array().unwrap();
        assert!((1..=3).contains(&cites.len()));
    }
    let quarry: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(quarry["citations"][0]["doc_id"], "persona:quarry-owner");
}

#[test]
fn chat_rejects_a_corrupt_index() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("index.bin");
    std::fs::write(&idx, b"not an index").unwrap();
    error_json(&cli(&["chat", "--index", &s(&idx), "--queries", "queries.txt"]), 2);
    error_json(&cli(&["chat", "--index", &s(&dir.path().join("absent.bin")), "--queries", "queries.txt"]), 3);
}

#[test]
fn report_writes_plot_ready_files() {
    let dir = tempfile::tempdir().unwrap();
    let stories = ingest(dir.path());
    let records = dir.path().join("records.jsonl");
    ok_json(&cli(&["generate", "--stories", &s(&stories), "--examples", "examples", "--out", &s(&records)]));
    let out = dir.path().join("report");
    let v = ok_json(&cli(&[
        "report", "--records", &s(&records), "--judgments", "judgments.csv", "--survey", "survey.csv", "--out", &s(&out),
    ]));
    assert_eq!(v["files"].as_array().unwrap().len(), 5);
    let eff = std::fs::read_to_string(out.join("efficiency.csv")).unwrap();
    assert!(eff.starts_with("strategy,"));
    assert_eq!(eff.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.join("generation_records.csv")).unwrap().lines().count(), 49);
    error_json(&cli(&["report", "--out", &s(&out)]), 2);
}

#[test]
fn settings_are_validated() {
    error_json(&cli(&["--set", "retrieval.top_k=zero", "survey", "--survey", "survey.csv"]), 2);
    error_json(&cli(&["--set", "nonsense=1", "survey", "--survey", "survey.csv"]), 2);
    error_json(&cli(&["--fixed-time", "yesterday", "survey", "--survey", "survey.csv"]), 2);
}

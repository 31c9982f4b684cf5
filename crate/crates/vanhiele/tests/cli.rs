//! The `vanhiele` binary end to end: exit codes, determinism, replay, and interchange files.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vanhiele::{io, synthetic};
use vanhiele_core::folds::FoldPlan;
use vanhiele_core::report::RunStatus;

struct Workspace {
    dir: tempfile::TempDir,
    data: PathBuf,
    dictionary: PathBuf,
}

fn workspace(n: usize) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let dict = synthetic::dictionary();
    let corpus = synthetic::corpus(&dict, synthetic::typical_counts(n), 31);
    let data = dir.path().join("pairs.jsonl");
    let dictionary = dir.path().join("dictionary.json");
    io::write_pairs(&data, corpus.pairs()).unwrap();
    std::fs::write(&dictionary, synthetic::BUNDLED_DICTIONARY).unwrap();
    Workspace { dir, data, dictionary }
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vanhiele"));
        cmd.args(args);
        if args.first().is_some_and(|a| *a != "compare" && *a != "export") || args.get(1) == Some(&"fold-plan") {
            cmd.arg("--data").arg(&self.data).arg("--dictionary").arg(&self.dictionary);
        }
        cmd.output().unwrap()
    }

    fn run_offline(&self, args: &[&str]) -> Output {
        let mut all = args.to_vec();
        all.extend(["--embedding-backend", "hash", "--hash-dim", "64"]);
        self.run(&all)
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vanhiele"))
}

#[test]
fn validate_prints_the_distribution() {
    let ws = workspace(40);
    let out = ws.run(&["validate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("40 pairs, 33 skills over 5 levels"), "{text}");
    assert!(text.contains("Informal Deduction"));
    assert!(text.contains("L3.1"));
}

#[test]
fn missing_input_file_is_a_usage_error() {
    let out = bin().args(["validate", "--data", "/nonexistent/pairs.jsonl", "--dictionary", "/nonexistent/dict.json"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/dict.json"), "{}", stderr(&out));
}

#[test]
fn missing_data_flag_is_a_usage_error() {
    let ws = workspace(5);
    let out = bin().arg("validate").arg("--dictionary").arg(&ws.dictionary).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
}

#[test]
fn malformed_record_is_a_data_error_with_line_number() {
    let ws = workspace(10);
    let mut text = std::fs::read_to_string(&ws.data).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = r#"{"id": "bad", "question": "q", "response": "r", "level": 9, "skill_ids": []}"#;
    text = lines.join("\n");
    std::fs::write(&ws.data, text).unwrap();

    let out = ws.run(&["validate"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let lenient = ws.run(&["validate", "--lenient"]);
    assert_eq!(code(&lenient), 0, "{}", stderr(&lenient));
    assert!(stdout(&lenient).starts_with("9 pairs"));
    assert!(stderr(&lenient).contains("line 3"));
}

#[test]
fn noisy_variant_without_seed_is_a_usage_error() {
    let ws = workspace(20);
    let out = ws.run_offline(&["evaluate", "--llm-backend", "echo", "--variant", "noisy-skills", "--output", ws.path("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn unreachable_backend_exits_with_backend_code() {
    let ws = workspace(20);
    let config = ws.path("run.toml");
    std::fs::write(&config, "[retry]\nattempts = 2\ninitial_backoff_ms = 1\nmax_backoff_ms = 2\n").unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    let output = ws.path("out");
    let out = ws.run_offline(&[
        "--config",
        config.to_str().unwrap(),
        "evaluate",
        "--llm-backend",
        "openai",
        "--llm-endpoint",
        &endpoint,
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let report = io::load_report(&output.join("report.json")).unwrap();
    assert_eq!(report.status, RunStatus::Failed);
    assert!(report.per_fold.is_empty());
}

#[test]
fn replay_without_cache_entries_is_a_backend_failure() {
    let ws = workspace(20);
    let cache = ws.path("cache");
    let out = ws.run_offline(&["evaluate", "--llm-backend", "replay", "--completion-cache", cache.to_str().unwrap(), "--output", ws.path("o").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let no_cache = ws.run_offline(&["evaluate", "--llm-backend", "replay", "--output", ws.path("o2").to_str().unwrap()]);
    assert_eq!(code(&no_cache), 3);
}

#[test]
fn classify_is_deterministic_with_a_scripted_backend() {
    let ws = workspace(30);
    let pair = ws.path("pair.json");
    std::fs::write(&pair, r#"{"question": "Is every square a rectangle?", "response": "Yes, because a square has four right angles."}"#).unwrap();
    let prompts = ws.path("prompts");
    let args = [
        "classify",
        "--llm-backend",
        "scripted",
        "--scripted-reply",
        "{\"level\": 2}",
        "--pair",
        pair.to_str().unwrap(),
        "--prompts-dir",
        prompts.to_str().unwrap(),
    ];
    let first = ws.run_offline(&args);
    let second = ws.run_offline(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    let prediction: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(prediction["level"], 2);
    assert_eq!(prediction["parse_status"], "parsed");
    assert_eq!(prediction["retrieved_ids"].as_array().unwrap().len(), 5);
    assert_eq!(std::fs::read_dir(&prompts).unwrap().count(), 1);
}

#[test]
fn classify_excludes_the_target_from_retrieval() {
    let ws = workspace(30);
    let text = std::fs::read_to_string(&ws.data).unwrap();
    let record: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let pair = ws.path("pair.json");
    std::fs::write(&pair, record.to_string()).unwrap();
    let out = ws.run_offline(&["classify", "--llm-backend", "echo", "--pair", pair.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let prediction: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(prediction["level"], record["level"]);
    assert!(!prediction["retrieved_ids"].as_array().unwrap().contains(&record["id"]));
}

fn evaluate(ws: &Workspace, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["evaluate", "--output", out.to_str().unwrap()];
    args.extend(extra);
    ws.run_offline(&args)
}

#[test]
fn completions_replay_from_cache() {
    let ws = workspace(30);
    let cache = ws.path("completions");
    let cache_arg = cache.to_str().unwrap();
    let live = evaluate(&ws, &ws.path("live"), &["--llm-backend", "echo", "--completion-cache", cache_arg]);
    assert_eq!(code(&live), 0, "{}", stderr(&live));
    let replay = evaluate(&ws, &ws.path("replay"), &["--llm-backend", "replay", "--completion-cache", cache_arg]);
    assert_eq!(code(&replay), 0, "{}", stderr(&replay));
    let a = std::fs::read_to_string(ws.path("live/predictions.jsonl")).unwrap();
    let b = std::fs::read_to_string(ws.path("replay/predictions.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn compare_reports_from_two_runs() {
    let ws = workspace(50);
    assert_eq!(code(&evaluate(&ws, &ws.path("a"), &["--llm-backend", "echo"])), 0);
    let b = evaluate(&ws, &ws.path("b"), &["--llm-backend", "scripted", "--scripted-reply", "{\"level\": 2}", "--variant", "baseline"]);
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let (ra, rb) = (ws.path("a/report.json"), ws.path("b/report.json"));

    let out = bin().args(["compare", ra.to_str().unwrap(), rb.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    for metric in ["f1_macro: t(4) = ", "f1_weighted: t(4) = ", "qwk: t(4) = ", "mae: t(4) = "] {
        assert!(text.contains(metric), "{text}");
    }

    let json = bin().args(["compare", ra.to_str().unwrap(), rb.to_str().unwrap(), "--metric", "qwk", "--json"]).output().unwrap();
    let parsed: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 1);
    assert_eq!(parsed[0]["test"]["degrees_of_freedom"], 4);

    assert_eq!(code(&evaluate(&ws, &ws.path("c"), &["--llm-backend", "echo", "--seed", "7"])), 0);
    let mismatch = bin().args(["compare", ra.to_str().unwrap(), ws.path("c/report.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&mismatch), 1);
    assert!(stderr(&mismatch).contains("fold"), "{}", stderr(&mismatch));
}

#[test]
fn exported_fold_plan_is_reused() {
    let ws = workspace(40);
    let plan_path = ws.path("plan.json");
    let out = ws.run(&["export", "fold-plan", "--out", plan_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let plan: FoldPlan = io::read_json(&plan_path).unwrap();
    assert_eq!((plan.seed, plan.n_folds, plan.schema_version), (42, 5, 1));

    let run = evaluate(&ws, &ws.path("run"), &["--llm-backend", "echo", "--fold-plan", plan_path.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = io::load_report(&ws.path("run/report.json")).unwrap();
    assert_eq!(report.fold_plan_sha256.as_deref(), Some(io::fold_plan_sha256(&plan).as_str()));
    let written: FoldPlan = io::read_json(&ws.path("run/fold_plan.json")).unwrap();
    assert_eq!(written, plan);
}

#[test]
fn export_csv_and_pairs() {
    let ws = workspace(30);
    assert_eq!(code(&evaluate(&ws, &ws.path("run"), &["--llm-backend", "echo"])), 0);
    let csv_dir = ws.path("csv");
    let out = bin()
        .args(["export", "csv", "--report", ws.path("run/report.json").to_str().unwrap(), "--out-dir", csv_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read(csv_dir.join("per_fold.csv")).unwrap(), std::fs::read(ws.path("run/per_fold.csv")).unwrap());

    let pairs = ws.path("pairs_out.jsonl");
    let mut cmd = bin();
    cmd.args(["export", "pairs", "--out", pairs.to_str().unwrap(), "--data"]).arg(&ws.data).arg("--dictionary").arg(&ws.dictionary);
    assert_eq!(code(&cmd.output().unwrap()), 0);
    assert_eq!(std::fs::read_to_string(pairs).unwrap(), std::fs::read_to_string(&ws.data).unwrap());
}

#[test]
fn shipped_data_files_match_the_generators() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let shipped = std::fs::read_to_string(root.join("skills_dictionary.json")).unwrap();
    assert_eq!(shipped, synthetic::BUNDLED_DICTIONARY);
    let sample = std::fs::read_to_string(root.join("sample_pairs.jsonl")).unwrap();
    let dict = synthetic::dictionary();
    let corpus = synthetic::corpus(&dict, synthetic::typical_counts(50), 7);
    assert_eq!(sample, io::pairs_to_jsonl(corpus.pairs()));
}

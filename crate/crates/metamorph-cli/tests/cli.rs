//! Exit-code and flag contracts of the `metamorph` binary. Every
//! command answers 0 for clean, 1 for "worked, found problems", and 2
//! for "could not do what was asked".

use std::path::Path;
use std::process::Command;

use metamorph::model::{pair_id, RunMeta, RunReport, SourceInput, TaskKind, TestPair, Verdict};
use metamorph::reporting::RunStore;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_metamorph")
}

fn run_cli(cwd: &Path, args: &[&str]) -> (i32, String, String) {
    let output = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn metamorph");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn corpus_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../metamorph/corpus")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn write_numeric_fixtures(dir: &Path) {
    let suite: String = [3i64, -4, 0, 7, -9]
        .iter()
        .map(|v| {
            format!(
                "{}\n",
                serde_json::json!({"id": format!("n{v}"), "task": "numeric-demo", "text": v.to_string()})
            )
        })
        .collect();
    std::fs::write(dir.join("numbers.jsonl"), suite).unwrap();
    std::fs::copy(corpus_file("numeric_negation.mrs"), dir.join("negate.mrs")).unwrap();
    std::fs::write(
        dir.join("config.toml"),
        concat!(
            "suite = \"numbers.jsonl\"\n",
            "relations = \"negate.mrs\"\n",
            "store-dir = \"runs\"\n\n",
            "[sut]\n",
            "kind = \"builtin-function\"\n",
            "endpoint-or-command = \"square\"\n",
            "model-id = \"square\"\n"
        ),
    )
    .unwrap();
}

fn seed_store_with_violation(store_dir: &Path) -> (String, String, String) {
    let store = RunStore::new(store_dir).unwrap();
    let source = SourceInput::new("a", TaskKind::Generic, "text");
    let mut followup = source.clone();
    followup.text.push_str(" tweaked");
    let pairs = vec![
        TestPair {
            source: source.clone(),
            followup: followup.clone(),
            mr_id: "mr".into(),
            provenance: Vec::new(),
            derivation_seed: 0,
        },
        TestPair {
            source: SourceInput::new("b", TaskKind::Generic, "more"),
            followup: SourceInput::new("b", TaskKind::Generic, "more tweaked"),
            mr_id: "mr".into(),
            provenance: Vec::new(),
            derivation_seed: 0,
        },
    ];
    let verdicts = vec![
        Verdict::violation(pair_id("a", "mr"), "mr".into(), Some(0.0), "diverged".into()),
        Verdict::pass(pair_id("b", "mr"), "mr".into(), Some(1.0), "agreed".into()),
    ];
    let meta = RunMeta {
        run_id: "seeded".into(),
        model_id: "m".into(),
        config_hash: "hash-one".into(),
        started: "2026-08-15T00:00:00Z".into(),
        finished: "2026-08-15T00:00:01Z".into(),
    };
    let report = RunReport::aggregate(&verdicts, &pairs, meta).unwrap();
    store.persist_run(&report, &verdicts, &pairs).unwrap();
    (
        "seeded".to_string(),
        pair_id("a", "mr"),
        pair_id("b", "mr"),
    )
}

// ---------------------------------------------------------------------
// validate

#[test]
fn validate_accepts_a_clean_file_silently() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) =
        run_cli(dir.path(), &["validate", &corpus_file("invariance_misspell.mrs")]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty(), "clean file should produce no output: {stdout}");
}

#[test]
fn validate_reports_semantic_errors_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mrs");
    std::fs::write(
        &path,
        "relation \"p\" {\n  transform: misspell();\n  expect: equivalent(threshold = 1.5);\n}\n",
    )
    .unwrap();
    let (code, stdout, _) = run_cli(dir.path(), &["validate", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.contains("error at 3:"), "{stdout}");
    assert!(stdout.contains("threshold"), "{stdout}");
}

#[test]
fn validate_exits_2_on_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run_cli(dir.path(), &["validate", "no-such-file.mrs"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("no-such-file.mrs"), "{stderr}");
}

// ---------------------------------------------------------------------
// run

#[test]
fn run_exits_0_on_clean_and_1_on_violations_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_numeric_fixtures(dir.path());
    let (code, stdout, stderr) = run_cli(dir.path(), &["run", "--config", "config.toml"]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("violations: 0"), "{stdout}");
    assert!(!stdout.contains('\u{1b}'), "piped output must carry no color codes: {stdout}");

    let (code, stdout, _) = run_cli(
        dir.path(),
        &["run", "--config", "config.toml", "--sut-target", "square-mutant"],
    );
    assert_eq!(code, 1, "the mutant must produce violations");
    assert!(stdout.contains("square_negation_invariance"), "{stdout}");

    let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 2, "both runs persisted");
    for run in runs {
        assert!(run.join("report.json").is_file());
        assert!(run.join("verdicts.jsonl").is_file());
        assert!(run.join("pairs.jsonl").is_file());
        assert!(run.join("config.json").is_file(), "resolved config echoed into the run dir");
        assert!(run.join("log.jsonl").is_file());
    }
}

#[test]
fn run_exits_2_when_the_endpoint_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    write_numeric_fixtures(dir.path());
    let (code, _, stderr) = run_cli(
        dir.path(),
        &[
            "run", "--config", "config.toml",
            "--sut-kind", "http-chat",
            "--sut-target", "http://127.0.0.1:9/v1/chat/completions",
        ],
    );
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("preflight"), "{stderr}");
}

#[test]
fn run_exits_2_offline_with_a_cold_cache() {
    let dir = tempfile::tempdir().unwrap();
    write_numeric_fixtures(dir.path());
    let (code, _, stderr) = run_cli(
        dir.path(),
        &[
            "run", "--config", "config.toml", "--offline",
            "--cache-dir", "cache",
            "--sut-kind", "http-chat",
            "--sut-target", "http://127.0.0.1:9/v1/chat/completions",
        ],
    );
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("offline"), "{stderr}");
}

#[test]
fn run_exits_2_on_malformed_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), "not-a-known-key = true\n").unwrap();
    let (code, _, stderr) = run_cli(dir.path(), &["run", "--config", "config.toml"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("not-a-known-key"), "{stderr}");
}

// ---------------------------------------------------------------------
// gen

#[test]
fn gen_emits_parseable_pairs_without_executing() {
    let dir = tempfile::tempdir().unwrap();
    write_numeric_fixtures(dir.path());
    let (code, stdout, stderr) = run_cli(dir.path(), &["gen", "--config", "config.toml"]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let pairs: Vec<TestPair> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).expect("pair line parses"))
        .collect();
    assert_eq!(pairs.len(), 5);
    assert!(pairs.iter().all(|p| p.mr_id == "square_negation_invariance"));
    assert!(stderr.contains("generated 5 pairs"), "{stderr}");
    assert!(!dir.path().join("runs").exists(), "gen must not create runs");
}

// ---------------------------------------------------------------------
// report / diff / annotate

#[test]
fn report_renders_stored_runs_and_rejects_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let store_dir = dir.path().join("runs");
    let (run_id, _, _) = seed_store_with_violation(&store_dir);
    let store_arg = store_dir.to_str().unwrap();

    let (code, stdout, _) =
        run_cli(dir.path(), &["report", &run_id, "--store-dir", store_arg]);
    assert_eq!(code, 0);
    assert!(stdout.contains("config-hash: hash-one"), "{stdout}");
    assert!(stdout.contains("true-positive rate: n/a"), "{stdout}");

    let (code, stdout, _) = run_cli(
        dir.path(),
        &["report", &run_id, "--format", "junit", "--store-dir", store_arg],
    );
    assert_eq!(code, 0);
    assert!(stdout.starts_with("<?xml"), "{stdout}");
    assert!(stdout.contains("<failure"), "{stdout}");

    let (code, _, stderr) =
        run_cli(dir.path(), &["report", "ghost", "--store-dir", store_arg]);
    assert_eq!(code, 2);
    assert!(stderr.contains("ghost"), "{stderr}");
}

#[test]
fn diff_rejects_unknown_runs_and_mismatched_configs_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let store_dir = dir.path().join("runs");
    let (run_id, _, _) = seed_store_with_violation(&store_dir);
    let store_arg = store_dir.to_str().unwrap();

    let (code, _, stderr) =
        run_cli(dir.path(), &["diff", &run_id, "ghost", "--store-dir", store_arg]);
    assert_eq!(code, 2);
    assert!(stderr.contains("ghost"), "{stderr}");

    let store = RunStore::new(&store_dir).unwrap();
    let mut report = store.load_report(&run_id).unwrap();
    report.run_id = "other-config".into();
    report.config_hash = "hash-two".into();
    let verdicts = store.load_verdicts(&run_id).unwrap();
    let pairs = store.load_pairs(&run_id).unwrap();
    store.persist_run(&report, &verdicts, &pairs).unwrap();

    let (code, _, stderr) = run_cli(
        dir.path(),
        &["diff", &run_id, "other-config", "--store-dir", store_arg],
    );
    assert_eq!(code, 2);
    assert!(stderr.contains("incomparable"), "{stderr}");

    let (code, stdout, _) = run_cli(
        dir.path(),
        &["diff", &run_id, "other-config", "--force", "--store-dir", store_arg],
    );
    assert_eq!(code, 0, "same tallies, no drift: {stdout}");
}

#[test]
fn annotate_accepts_violations_only() {
    let dir = tempfile::tempdir().unwrap();
    let store_dir = dir.path().join("runs");
    let (run_id, violation_pair, pass_pair) = seed_store_with_violation(&store_dir);
    let store_arg = store_dir.to_str().unwrap();

    let (code, _, stderr) = run_cli(
        dir.path(),
        &["annotate", &run_id, &pass_pair, "--judgment", "tp", "--store-dir", store_arg],
    );
    assert_eq!(code, 2, "annotating a pass must fail");
    assert!(stderr.contains("violation"), "{stderr}");

    let (code, stdout, _) = run_cli(
        dir.path(),
        &[
            "annotate", &run_id, &violation_pair,
            "--judgment", "fp",
            "--note", "comparator too strict",
            "--annotator", "rev",
            "--store-dir", store_arg,
        ],
    );
    assert_eq!(code, 0);
    assert!(stdout.contains("true-positive rate: 0.00"), "{stdout}");
}

// ---------------------------------------------------------------------
// demo

#[test]
fn demo_round_trips_and_persists_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run_cli(dir.path(), &["demo"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("violations: 0"), "{stdout}");

    let (code, stdout, _) = run_cli(dir.path(), &["demo", "--mutant"]);
    assert_eq!(code, 1);
    assert!(stdout.contains("violations: 24"), "{stdout}");

    let (code, _, _) = run_cli(dir.path(), &["demo", "--store-dir", "demo-runs"]);
    assert_eq!(code, 0);
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("demo-runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].join("report.json").is_file());
}

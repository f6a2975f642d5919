//! Release-gate checks. Each test exercises one headline guarantee of
//! the harness end to end and prints an `ACCEPTANCE <n> …: PASS` line on
//! success, so `cargo test --test acceptance -- --nocapture` reads as a
//! checklist.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metamorph::adapters::{Adapter, MockFaultModel, SutKind, SutSpec};
use metamorph::engine::{self, RunPlan};
use metamorph::model::{
    pair_id, Aggregation, AppliesTo, MetamorphicRelation, RunMeta, RunReport, SourceInput,
    TaskKind, TestPair, Verdict, VerdictOutcome,
};
use metamorph::relations::{similarity, ComparatorKind, ComparatorSpec, RelationKind};
use metamorph::reporting::{true_positive_rate, RunStore};
use metamorph::transforms::TransformStep;

// ---------------------------------------------------------------------
// Helpers

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_metamorph")
}

fn run_cli(cwd: &Path, args: &[&str]) -> (i32, String, String) {
    let output = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("NO_COLOR", "1")
        .output()
        .expect("spawn metamorph");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn exact_mr(id: &str, step: TransformStep) -> MetamorphicRelation {
    graded_mr(id, step, ComparatorKind::Exact, 1.0, 0.0)
}

fn graded_mr(
    id: &str,
    step: TransformStep,
    kind: ComparatorKind,
    threshold: f64,
    band: f64,
) -> MetamorphicRelation {
    MetamorphicRelation {
        id: id.to_string(),
        name: id.to_string(),
        applies_to: AppliesTo::Any,
        transform_pipeline: vec![step],
        output_relation: RelationKind::Equivalence,
        comparator: ComparatorSpec::new(kind, threshold, band),
        repetitions: 1,
        aggregation: Aggregation::AnyViolation,
    }
}

fn meta(run_id: &str) -> RunMeta {
    RunMeta {
        run_id: run_id.to_string(),
        model_id: "test".to_string(),
        config_hash: "test".to_string(),
        started: "2026-08-15T00:00:00Z".to_string(),
        finished: "2026-08-15T00:00:01Z".to_string(),
    }
}

// ---------------------------------------------------------------------
// 1. The squaring function is even: f(x) = f(-x). The harness must clear
// the correct implementation and pin the x*|x| mutant on exactly the
// nonzero inputs, all within a second.

#[test]
fn acceptance_1_squaring_relation_oracle() {
    let clock = Instant::now();
    let suite: Vec<SourceInput> = (-12i64..=12)
        .map(|v| SourceInput::new(format!("n{v}"), TaskKind::NumericDemo, v.to_string()))
        .collect();
    let mr = exact_mr("square_negation", TransformStep::new("negate-numeric"));

    let correct = SutSpec::new(SutKind::BuiltinFunction, "square");
    let plan = RunPlan::new(suite.clone(), vec![mr.clone()], correct.clone());
    let adapter = Adapter::new(correct, None, false).unwrap();
    let (report, generated, _) = engine::run(&plan, &adapter, None, meta("correct")).unwrap();
    assert_eq!(generated.pairs.len(), 25);
    assert_eq!(report.total_violations(), 0);
    assert_eq!(report.per_mr["square_negation"].passes, 25);

    let mutant = SutSpec::new(SutKind::BuiltinFunction, "square-mutant");
    let plan = RunPlan::new(suite, vec![mr], mutant.clone());
    let adapter = Adapter::new(mutant, None, false).unwrap();
    let (_, _, outcome) = engine::run(&plan, &adapter, None, meta("mutant")).unwrap();
    let violating: BTreeSet<String> = outcome
        .verdicts
        .iter()
        .filter(|v| v.outcome == VerdictOutcome::Violation)
        .map(|v| v.pair_id.clone())
        .collect();
    let expected: BTreeSet<String> = (-12i64..=12)
        .filter(|v| *v != 0)
        .map(|v| pair_id(&format!("n{v}"), "square_negation"))
        .collect();
    assert_eq!(violating, expected, "mutant must violate exactly the nonzero sources");
    let zero_pair: Vec<_> = outcome
        .verdicts
        .iter()
        .filter(|v| v.pair_id == pair_id("n0", "square_negation"))
        .collect();
    assert_eq!(zero_pair.len(), 1);
    assert_eq!(zero_pair[0].outcome, VerdictOutcome::Pass);

    assert!(clock.elapsed().as_secs_f64() < 1.0, "took {:?}", clock.elapsed());
    println!("ACCEPTANCE 1 squaring-relation-oracle: PASS");
}

// ---------------------------------------------------------------------
// 2. A mock that answers by normalized lookup is indifferent to every
// invariance perturbation, so 50 inputs across 5 relations must come out
// at failure rate exactly 0.0.

fn five_invariance_mrs() -> Vec<MetamorphicRelation> {
    vec![
        graded_mr(
            "inv_misspell",
            TransformStep::new("misspell"),
            ComparatorKind::TokenJaccard,
            0.6,
            0.0,
        ),
        graded_mr(
            "inv_paraphrase",
            TransformStep::new("synonym-paraphrase").with_param("max-words", "2"),
            ComparatorKind::TfCosine,
            0.8,
            0.05,
        ),
        graded_mr(
            "inv_case",
            TransformStep::new("case-perturb").with_param("mode", "invert"),
            ComparatorKind::NormalizedExact,
            1.0,
            0.0,
        ),
        graded_mr(
            "inv_punct",
            TransformStep::new("punctuation-strip"),
            ComparatorKind::NormalizedExact,
            1.0,
            0.0,
        ),
        graded_mr(
            "inv_distractor",
            TransformStep::new("append-distractor")
                .with_param("distractor-text", "Also, the weather stayed mild."),
            ComparatorKind::TokenJaccard,
            0.7,
            0.1,
        ),
    ]
}

#[test]
fn acceptance_2_perfect_mock_invariance() {
    let clock = Instant::now();
    let nouns =
        ["movie", "house", "road", "car", "city", "doctor", "teacher", "child", "story", "answer"];
    let adjs = ["great", "good", "happy", "quick", "smart"];
    let mut suite = Vec::new();
    let mut table = Vec::new();
    for (i, noun) in nouns.iter().enumerate() {
        for (j, adj) in adjs.iter().enumerate() {
            let id = format!("q{i}-{j}");
            let text = format!("The {noun} seemed rather {adj} to everyone, right?");
            table.push((text.clone(), format!("settled verdict {i}-{j}")));
            suite.push(SourceInput::new(id, TaskKind::QuestionAnswering, text));
        }
    }
    assert_eq!(suite.len(), 50);

    let spec = SutSpec::new(SutKind::MockScripted, "inline-table");
    let adapter = Adapter::with_mock_table(spec.clone(), table, false).unwrap();
    let plan = RunPlan::new(suite, five_invariance_mrs(), spec);
    plan.validate().unwrap();
    let (report, generated, _) = engine::run(&plan, &adapter, None, meta("perfect")).unwrap();

    assert!(generated.skipped.is_empty(), "skips: {:?}", generated.skipped);
    assert_eq!(report.total_pairs(), 250);
    for (mr_id, tally) in &report.per_mr {
        assert_eq!(tally.violations, 0, "{mr_id} violated");
        assert_eq!(tally.inconclusive, 0, "{mr_id} inconclusive");
        assert_eq!(tally.failure_rate, 0.0, "{mr_id} rate nonzero");
    }
    assert!(clock.elapsed().as_secs_f64() < 5.0, "took {:?}", clock.elapsed());
    println!("ACCEPTANCE 2 perfect-mock-invariance: PASS");
}

// ---------------------------------------------------------------------
// 3. With phrasing sensitivity 0.2 the faulty mock diverges on roughly a
// fifth of perturbed prompts: over 1,000 pairs the measured rate must
// land within the 3-sigma binomial band, and the exact count must be
// bit-reproducible under a fixed seed.

/// 250 distinct landmark codes whose letters are already in ascending
/// order. Each code therefore equals its own character-sorted form and
/// no two collide under the mock's order-insensitive lookup signature,
/// so every follow-up resolves back to its own table entry. Plain
/// numbering would not do: "12" and "21" are anagrams and would alias.
fn landmark_codes(count: usize) -> Vec<String> {
    let mut codes = Vec::new();
    'outer: for a in b'a'..=b'z' {
        for b in a..=b'z' {
            for c in b..=b'z' {
                let code = String::from_utf8(vec![a, b, c]).unwrap();
                if code == "ddo" {
                    continue;
                }
                codes.push(code);
                if codes.len() == count {
                    break 'outer;
                }
            }
        }
    }
    codes
}

fn fault_injection_run() -> (RunReport, Vec<Verdict>) {
    let mut suite = Vec::new();
    let mut table = Vec::new();
    for (i, code) in landmark_codes(250).into_iter().enumerate() {
        let text = format!("please describe landmark {code} in the old town, thanks?");
        table.push((text.clone(), format!("fact {i}")));
        suite.push(SourceInput::new(format!("in{i}"), TaskKind::QuestionAnswering, text));
    }
    let mrs = vec![
        exact_mr("f_misspell", TransformStep::new("misspell")),
        exact_mr("f_case", TransformStep::new("case-perturb").with_param("mode", "invert")),
        exact_mr("f_punct", TransformStep::new("punctuation-strip")),
        exact_mr(
            "f_distractor",
            TransformStep::new("append-distractor")
                .with_param("distractor-text", "in other news the market stayed calm"),
        ),
    ];
    let mut spec = SutSpec::new(SutKind::MockFaulty, "inline-table");
    spec.fault = Some(MockFaultModel {
        phrasing_sensitivity: 0.2,
        nondeterminism: 0.0,
        rng_seed: 7,
    });
    let adapter = Adapter::with_mock_table(spec.clone(), table, false).unwrap();
    let plan = RunPlan::new(suite, mrs, spec);
    let (report, generated, outcome) =
        engine::run(&plan, &adapter, None, meta("faulty")).unwrap();
    assert!(generated.skipped.is_empty());
    assert_eq!(report.total_pairs(), 1000);
    (report, outcome.verdicts)
}

#[test]
fn acceptance_3_fault_injection_calibration() {
    let (report, verdicts) = fault_injection_run();
    let violations = report.total_violations();
    let decided = verdicts
        .iter()
        .filter(|v| v.outcome != VerdictOutcome::Inconclusive)
        .count() as u64;
    assert_eq!(decided, 1000, "every pair must be decided");
    let rate = violations as f64 / decided as f64;
    assert!(
        (rate - 0.20).abs() <= 0.04,
        "rate {rate} outside 0.20 +/- 0.04 ({violations} violations)"
    );

    let (report_again, verdicts_again) = fault_injection_run();
    assert_eq!(report_again.total_violations(), violations);
    assert_eq!(verdicts_again, verdicts, "verdicts must be reproducible under a fixed seed");
    println!("ACCEPTANCE 3 fault-injection-calibration: PASS");
}

// ---------------------------------------------------------------------
// 4. Appending a negating clause flips rule-based sentiment. The honest
// rule mock passes everywhere; the mutant that ignores negation violates
// on every pair whose follow-up carries the negation distractor.

fn sentiment_flip_plan(builtin: &str) -> (RunPlan, Adapter) {
    let positive =
        ["great", "good", "happy", "pleasant", "superb", "amazing", "brilliant", "fine",
         "wonderful", "excellent"];
    let negative =
        ["awful", "bad", "boring", "dull", "poor", "sad", "terrible", "weak", "horrible",
         "mediocre"];
    let mut suite = Vec::new();
    for (i, word) in positive.iter().chain(negative.iter()).enumerate() {
        suite.push(SourceInput::new(
            format!("s{i}"),
            TaskKind::SentimentAnalysis,
            format!("the acting felt {word} throughout"),
        ));
    }
    assert_eq!(suite.len(), 20);
    let mr = MetamorphicRelation {
        id: "negation_flip".to_string(),
        name: "negation_flip".to_string(),
        applies_to: AppliesTo::Tasks(BTreeSet::from([TaskKind::SentimentAnalysis])),
        transform_pipeline: vec![TransformStep::new("append-distractor")
            .with_param("distractor-text", "on reflection that is not accurate")],
        output_relation: RelationKind::Flip {
            label_map: [("POS", "NEG"), ("NEG", "POS"), ("NEU", "NEU")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            label_lexicon: [("positive", "POS"), ("negative", "NEG"), ("neutral", "NEU")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        },
        comparator: ComparatorSpec::new(ComparatorKind::Exact, 1.0, 0.0),
        repetitions: 1,
        aggregation: Aggregation::AnyViolation,
    };
    let spec = SutSpec::new(SutKind::BuiltinFunction, builtin);
    let adapter = Adapter::new(spec.clone(), None, false).unwrap();
    (RunPlan::new(suite, vec![mr], spec), adapter)
}

#[test]
fn acceptance_4_sentiment_negation_flip() {
    let (plan, adapter) = sentiment_flip_plan("sentiment");
    let (report, _, _) = engine::run(&plan, &adapter, None, meta("honest")).unwrap();
    assert_eq!(report.total_pairs(), 20);
    assert_eq!(report.total_violations(), 0);
    assert_eq!(report.per_mr["negation_flip"].passes, 20);

    let (plan, adapter) = sentiment_flip_plan("sentiment-no-negation");
    let (report, _, outcome) = engine::run(&plan, &adapter, None, meta("mutant")).unwrap();
    assert_eq!(report.total_violations(), 20, "all 20 distractor pairs must violate");
    assert!(outcome
        .verdicts
        .iter()
        .all(|v| v.outcome == VerdictOutcome::Violation));
    println!("ACCEPTANCE 4 sentiment-negation-flip: PASS");
}

// ---------------------------------------------------------------------
// 5. Replay determinism: once the response cache is warm, offline runs
// must not depend on the network at all, and two such runs must agree
// byte for byte apart from run id and timestamps.

fn spawn_chat_server() -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let body_start;
            loop {
                match stream.read(&mut chunk) {
                    Ok(0) => return,
                    Ok(n) => buffer.extend_from_slice(&chunk[..n]),
                    Err(_) => return,
                }
                if let Some(pos) = find_subsequence(&buffer, b"\r\n\r\n") {
                    body_start = pos + 4;
                    break;
                }
            }
            let headers = String::from_utf8_lossy(&buffer[..body_start]).into_owned();
            let content_length: usize = headers
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            while buffer.len() < body_start + content_length {
                match stream.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => buffer.extend_from_slice(&chunk[..n]),
                    Err(_) => return,
                }
            }
            let body: serde_json::Value =
                serde_json::from_slice(&buffer[body_start..]).unwrap_or_default();
            let prompt = body["messages"][0]["content"].as_str().unwrap_or("").to_string();
            let normalized: String = prompt
                .to_lowercase()
                .chars()
                .filter(|c| !c.is_ascii_punctuation())
                .collect::<String>()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            let reply =
                serde_json::json!({"choices": [{"message": {"content": format!("reply: {normalized}")}}]});
            let payload = reply.to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    port
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn strip_volatile_fields(report_json: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(report_json).unwrap();
    for field in ["run-id", "run_id", "started", "finished"] {
        if value.get(field).is_some() {
            value[field] = serde_json::Value::String("X".to_string());
        }
    }
    metamorph::canon::canonical_json(&value)
}

#[test]
fn acceptance_5_replay_determinism() {
    let port = spawn_chat_server();
    let dir = tempfile::tempdir().unwrap();
    let suite_lines: String = (0..6)
        .map(|i| {
            format!(
                "{}\n",
                serde_json::json!({
                    "id": format!("q{i}"),
                    "task": "question-answering",
                    "text": format!("What is the tallest building in district {i}, please?")
                })
            )
        })
        .collect();
    std::fs::write(dir.path().join("suite.jsonl"), suite_lines).unwrap();
    std::fs::write(
        dir.path().join("relations.mrs"),
        concat!(
            "relation \"strict_misspell\" {\n",
            "  transform: misspell();\n",
            "  expect: equivalent(comparator = exact, threshold = 1);\n",
            "}\n",
            "relation \"case_safe\" {\n",
            "  transform: case_perturb(mode = invert);\n",
            "  expect: equivalent(comparator = normalized_exact, threshold = 1);\n",
            "}\n"
        ),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("config.toml"),
        format!(
            concat!(
                "suite = \"suite.jsonl\"\n",
                "relations = \"relations.mrs\"\n",
                "cache-dir = \"cache\"\n",
                "store-dir = \"runs\"\n",
                "workers = 1\n",
                "seed = 3\n\n",
                "[sut]\n",
                "kind = \"http-chat\"\n",
                "endpoint-or-command = \"http://127.0.0.1:{port}/v1/chat/completions\"\n",
                "model-id = \"replay-test\"\n"
            ),
            port = port
        ),
    )
    .unwrap();

    let (warm_code, _, warm_err) = run_cli(dir.path(), &["run", "--config", "config.toml"]);
    assert_eq!(warm_code, 1, "misspell under exact comparison must violate; stderr: {warm_err}");

    let (code_a, _, err_a) =
        run_cli(dir.path(), &["run", "--config", "config.toml", "--offline"]);
    assert_eq!(code_a, 1, "stderr: {err_a}");
    let (code_b, _, err_b) =
        run_cli(dir.path(), &["run", "--config", "config.toml", "--offline"]);
    assert_eq!(code_b, 1, "stderr: {err_b}");

    let runs_dir = dir.path().join("runs");
    let mut run_ids: Vec<String> = std::fs::read_dir(&runs_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|name| !name.starts_with('.'))
        .collect();
    run_ids.sort();
    assert_eq!(run_ids.len(), 3);
    let offline_a = runs_dir.join(&run_ids[1]);
    let offline_b = runs_dir.join(&run_ids[2]);

    let verdicts_a = std::fs::read(offline_a.join("verdicts.jsonl")).unwrap();
    let verdicts_b = std::fs::read(offline_b.join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts_a, verdicts_b, "verdict streams must be byte-identical");

    let report_a = std::fs::read_to_string(offline_a.join("report.json")).unwrap();
    let report_b = std::fs::read_to_string(offline_b.join("report.json")).unwrap();
    assert_eq!(strip_volatile_fields(&report_a), strip_volatile_fields(&report_b));

    let verdicts: Vec<Verdict> = String::from_utf8(verdicts_a)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(
        verdicts.iter().all(|v| v.outcome != VerdictOutcome::Inconclusive),
        "offline runs must be served entirely from the warm cache"
    );
    println!("ACCEPTANCE 5 replay-determinism: PASS");
}

// ---------------------------------------------------------------------
// 6. The relation DSL round-trips: canonical serialization of any corpus
// file reparses to the same semantics and is idempotent, and the parser
// survives ten thousand random byte blobs without panicking.

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../metamorph/corpus")
}

#[test]
fn acceptance_6_dsl_round_trip_and_fuzz() {
    let mut corpus: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "mrs"))
        .collect();
    corpus.sort();
    assert!(corpus.len() >= 10, "corpus holds only {} files", corpus.len());

    for path in &corpus {
        let text = std::fs::read_to_string(path).unwrap();
        let doc = metamorph::mrspec::parse(&text)
            .unwrap_or_else(|d| panic!("{}: {d:?}", path.display()));
        let relations = metamorph::mrspec::to_relations(&doc)
            .unwrap_or_else(|d| panic!("{}: {d:?}", path.display()));
        let canonical = metamorph::mrspec::serialize_relations(&relations);
        let reparsed = metamorph::mrspec::parse(&canonical).unwrap();
        assert_eq!(
            metamorph::mrspec::to_relations(&reparsed).unwrap(),
            relations,
            "{} does not round-trip",
            path.display()
        );
        assert_eq!(
            metamorph::mrspec::serialize(&reparsed).unwrap(),
            canonical,
            "{} serialization is not idempotent",
            path.display()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let len = rng.gen_range(0..512);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let text = String::from_utf8_lossy(&bytes);
        let _ = metamorph::mrspec::parse(&text);
    }
    println!("ACCEPTANCE 6 dsl-round-trip-and-fuzz: PASS");
}

// ---------------------------------------------------------------------
// 7. Drift detection: a failure rate moving 0.10 -> 0.25 with epsilon
// 0.05 makes `diff` exit 1 and flag exactly that relation.

fn synthetic_run(
    run_id: &str,
    tallies: &[(&str, usize, usize)],
) -> (RunReport, Vec<Verdict>, Vec<TestPair>) {
    let mut pairs = Vec::new();
    let mut verdicts = Vec::new();
    for (mr_id, violations, passes) in tallies {
        for i in 0..(violations + passes) {
            let input_id = format!("{mr_id}-{i}");
            let source = SourceInput::new(&input_id, TaskKind::Generic, format!("text {i}"));
            let mut followup = source.clone();
            followup.text.push_str(" tweaked");
            pairs.push(TestPair {
                source,
                followup,
                mr_id: mr_id.to_string(),
                provenance: Vec::new(),
                derivation_seed: 0,
            });
            let id = pair_id(&input_id, mr_id);
            verdicts.push(if i < *violations {
                Verdict::violation(id, mr_id.to_string(), Some(0.0), "diverged".into())
            } else {
                Verdict::pass(id, mr_id.to_string(), Some(1.0), "agreed".into())
            });
        }
    }
    let mut run_meta = meta(run_id);
    run_meta.config_hash = "fixed-config".to_string();
    let report = RunReport::aggregate(&verdicts, &pairs, run_meta).unwrap();
    (report, verdicts, pairs)
}

#[test]
fn acceptance_7_drift_detection() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::new(dir.path().join("runs")).unwrap();
    let (report_a, verdicts_a, pairs_a) =
        synthetic_run("runA", &[("drifter", 1, 9), ("stable", 1, 9)]);
    let (report_b, verdicts_b, pairs_b) =
        synthetic_run("runB", &[("drifter", 5, 15), ("stable", 1, 9)]);
    assert_eq!(report_a.per_mr["drifter"].failure_rate, 0.1);
    assert_eq!(report_b.per_mr["drifter"].failure_rate, 0.25);
    store.persist_run(&report_a, &verdicts_a, &pairs_a).unwrap();
    store.persist_run(&report_b, &verdicts_b, &pairs_b).unwrap();

    let store_dir = dir.path().join("runs");
    let store_arg = store_dir.to_str().unwrap();
    let (code, stdout, _) = run_cli(
        dir.path(),
        &["diff", "runA", "runB", "--epsilon", "0.05", "--store-dir", store_arg],
    );
    assert_eq!(code, 1, "drift must be flagged:\n{stdout}");
    let flagged: Vec<&str> = stdout
        .lines()
        .filter(|l| l.trim_end().ends_with("yes"))
        .collect();
    assert_eq!(flagged.len(), 1, "exactly one relation flagged:\n{stdout}");
    assert!(flagged[0].starts_with("drifter"), "{stdout}");
    assert!(stdout.contains("+0.1500"), "{stdout}");

    let (code, stdout, _) = run_cli(
        dir.path(),
        &["diff", "runA", "runA", "--epsilon", "0.05", "--store-dir", store_arg],
    );
    assert_eq!(code, 0, "identical runs must not flag drift:\n{stdout}");
    println!("ACCEPTANCE 7 drift-detection: PASS");
}

// ---------------------------------------------------------------------
// 8. Triage arithmetic: 3 true positives out of 5 annotated violations
// is a 0.6 true-positive rate; with nothing annotated the rate renders
// as "n/a", never as zero.

#[test]
fn acceptance_8_triage_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let store_dir = dir.path().join("runs");
    let store = RunStore::new(&store_dir).unwrap();
    let store_arg = store_dir.to_str().unwrap();
    let (report, verdicts, pairs) = synthetic_run("triaged", &[("flaky", 5, 2)]);
    store.persist_run(&report, &verdicts, &pairs).unwrap();
    let (report2, verdicts2, pairs2) = synthetic_run("untouched", &[("flaky", 5, 2)]);
    store.persist_run(&report2, &verdicts2, &pairs2).unwrap();

    for (i, judgment) in ["tp", "tp", "tp", "fp", "fp"].iter().enumerate() {
        let pid = pair_id(&format!("flaky-{i}"), "flaky");
        let (code, _, stderr) = run_cli(
            dir.path(),
            &[
                "annotate", "triaged", &pid,
                "--judgment", judgment,
                "--annotator", "reviewer",
                "--store-dir", store_arg,
            ],
        );
        assert_eq!(code, 0, "stderr: {stderr}");
    }

    let triage = store.load_triage("triaged").unwrap();
    let annotations = metamorph::reporting::effective_annotations(&triage);
    assert_eq!(true_positive_rate(&annotations), Some(0.6));

    let (code, stdout, _) =
        run_cli(dir.path(), &["report", "triaged", "--store-dir", store_arg]);
    assert_eq!(code, 0);
    assert!(stdout.contains("true-positive rate: 0.60"), "{stdout}");

    let (code, stdout, _) =
        run_cli(dir.path(), &["report", "untouched", "--store-dir", store_arg]);
    assert_eq!(code, 0);
    assert!(stdout.contains("true-positive rate: n/a"), "{stdout}");
    println!("ACCEPTANCE 8 triage-arithmetic: PASS");
}

// ---------------------------------------------------------------------
// 9. Comparator ground truth: hand-computed scores hold exactly, and
// similarity is symmetric, self-identical, and bounded over a thousand
// random pairs.

#[test]
fn acceptance_9_comparator_suite() {
    let jaccard = similarity("the cat sat", "the cat ran", ComparatorKind::TokenJaccard);
    assert_eq!(jaccard, 0.5);

    let cosine = similarity("a a b", "a b", ComparatorKind::TfCosine);
    let expected = 3.0 / 10f64.sqrt();
    assert!((cosine - expected).abs() <= 1e-9, "{cosine} vs {expected}");

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let alphabet = ['a', 'b', 'c', 'd', 'e', ' '];
    let random_text = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(0..30);
        (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect::<String>()
    };
    for _ in 0..1000 {
        let a = random_text(&mut rng);
        let b = random_text(&mut rng);
        for kind in [
            ComparatorKind::Exact,
            ComparatorKind::NormalizedExact,
            ComparatorKind::TokenJaccard,
            ComparatorKind::TfCosine,
        ] {
            let ab = similarity(&a, &b, kind);
            let ba = similarity(&b, &a, kind);
            assert_eq!(ab, ba, "symmetry broke for {kind:?} on {a:?} / {b:?}");
            assert_eq!(similarity(&a, &a, kind), 1.0, "self-similarity for {kind:?} on {a:?}");
            assert!((0.0..=1.0).contains(&ab));
        }
    }
    println!("ACCEPTANCE 9 comparator-suite: PASS");
}

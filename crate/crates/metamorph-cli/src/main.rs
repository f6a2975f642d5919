//! `metamorph` command-line front end.
//!
//! Every subcommand follows one exit-code contract so CI can branch on
//! status alone: 0 means clean, 1 means the tool worked and found
//! violations or drift, 2 means the request itself could not be carried
//! out (bad config, missing file, unreachable SUT).

mod config;

use std::collections::BTreeSet;
use std::io::{IsTerminal, Write as _};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use metamorph::adapters::{Adapter, SutKind, SutSpec};
use metamorph::engine::{self, DriftReport, RunPlan};
use metamorph::model::{
    Aggregation, Annotation, AppliesTo, MetamorphicRelation, RunMeta, RunReport, SourceInput,
    TaskKind,
};
use metamorph::relations::{ComparatorKind, ComparatorSpec, RelationKind};
use metamorph::reporting::{
    effective_annotations, render_junit, render_table, render_tp_rate, true_positive_rate,
    RunStore, TriageRecord,
};
use metamorph::transforms::TransformStep;

use config::{load_relations, load_suite, Overrides, ResolvedConfig};

#[derive(Parser)]
#[command(
    name = "metamorph",
    version,
    about = "Metamorphic testing harness for LLM-backed and other black-box systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a relation file; exit 0 only when it has no errors
    Validate {
        /// Relation declarations (.mrs)
        mrs_path: PathBuf,
    },
    /// Derive source/follow-up pairs and emit them as JSONL without
    /// calling the SUT
    Gen {
        #[command(flatten)]
        flags: Overrides,
        /// Write pairs here instead of stdout
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Execute the configured plan, store the run, and print the
    /// failure-rate table; exit 1 when violations were found
    Run {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Re-render a stored run
    Report {
        run_id: String,
        /// Output form
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        /// Run store directory
        #[arg(long, value_name = "DIR", default_value = "runs")]
        store_dir: PathBuf,
    },
    /// Compare two stored runs; exit 1 when failure-rate drift at or
    /// above epsilon is flagged
    Diff {
        run_a: String,
        run_b: String,
        /// Failure-rate delta at or above which drift is flagged
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Compare runs even when their config hashes differ
        #[arg(long)]
        force: bool,
        /// Run store directory
        #[arg(long, value_name = "DIR", default_value = "runs")]
        store_dir: PathBuf,
    },
    /// Record a triage judgment on a stored violation
    Annotate {
        run_id: String,
        pair_id: String,
        /// Judgment: tp (true positive) or fp (false positive)
        #[arg(long, value_enum)]
        judgment: Judgment,
        /// Free-form rationale
        #[arg(long, default_value = "")]
        note: String,
        /// Who judged; defaults to $USER
        #[arg(long)]
        annotator: Option<String>,
        /// Run store directory
        #[arg(long, value_name = "DIR", default_value = "runs")]
        store_dir: PathBuf,
    },
    /// Run the built-in squaring example end to end with no network
    /// access: 25 integers, the negate-numeric relation, and the square
    /// builtin
    Demo {
        /// Use the deliberately broken x*|x| implementation
        #[arg(long)]
        mutant: bool,
        /// Persist the demo run into this store
        #[arg(long, value_name = "DIR")]
        store_dir: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Table,
    Junit,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Judgment {
    #[value(alias = "true-positive")]
    Tp,
    #[value(alias = "false-positive")]
    Fp,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { mrs_path } => cmd_validate(&mrs_path),
        Command::Gen { flags, out } => cmd_gen(&flags, out.as_deref()),
        Command::Run { flags } => cmd_run(&flags),
        Command::Report { run_id, format, store_dir } => {
            cmd_report(&run_id, format, &store_dir)
        }
        Command::Diff { run_a, run_b, epsilon, force, store_dir } => {
            cmd_diff(&run_a, &run_b, epsilon, force, &store_dir)
        }
        Command::Annotate { run_id, pair_id, judgment, note, annotator, store_dir } => {
            cmd_annotate(&run_id, &pair_id, judgment, &note, annotator, &store_dir)
        }
        Command::Demo { mutant, store_dir } => cmd_demo(mutant, store_dir.as_deref()),
    };
    std::process::exit(code);
}

fn fail(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    2
}

fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal()
}

fn paint(text: &str, code: &str, enabled: bool) -> String {
    if enabled {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "1970-01-01T00:00:00Z".to_string())
}

// ---------------------------------------------------------------------
// validate

fn cmd_validate(mrs_path: &Path) -> i32 {
    let text = match std::fs::read_to_string(mrs_path) {
        Ok(text) => text,
        Err(e) => return fail(format!("cannot read {}: {e}", mrs_path.display())),
    };
    let diagnostics = match metamorph::mrspec::parse(&text) {
        Ok(doc) => metamorph::mrspec::validate(&doc),
        Err(diagnostics) => diagnostics,
    };
    for diagnostic in &diagnostics {
        println!("{}: {diagnostic}", mrs_path.display());
    }
    if metamorph::mrspec::no_errors(&diagnostics) {
        0
    } else {
        1
    }
}

// ---------------------------------------------------------------------
// gen / run shared plumbing

struct LoadedPlan {
    plan: RunPlan,
    config: ResolvedConfig,
    config_hash: String,
    warnings: Vec<String>,
}

fn build_plan(flags: &Overrides) -> Result<LoadedPlan, String> {
    let config = ResolvedConfig::resolve(flags)?;
    let suite = load_suite(config.require_suite()?)?;
    let (relations, warnings) = load_relations(config.require_relations()?)?;
    let sut = config.require_sut()?.clone();
    let config_hash = config.config_hash(&suite, &relations);
    let mut plan = RunPlan::new(suite, relations, sut);
    plan.embedding_sut = config.embedding_sut.clone();
    plan.derivation_seed = config.seed;
    plan.worker_budget = config.workers;
    plan.offline = config.offline;
    plan.templates = config.templates.clone();
    plan.external_timeout_ms = config.external_timeout_ms;
    plan.validate().map_err(|e| e.to_string())?;
    Ok(LoadedPlan { plan, config, config_hash, warnings })
}

fn cmd_gen(flags: &Overrides, out: Option<&Path>) -> i32 {
    let loaded = match build_plan(flags) {
        Ok(loaded) => loaded,
        Err(message) => return fail(message),
    };
    for warning in &loaded.warnings {
        eprintln!("{warning}");
    }
    let generated = match engine::generate_pairs(&loaded.plan) {
        Ok(generated) => generated,
        Err(e) => return fail(e),
    };
    let mut lines = String::new();
    for pair in &generated.pairs {
        match serde_json::to_string(pair) {
            Ok(line) => {
                lines.push_str(&line);
                lines.push('\n');
            }
            Err(e) => return fail(e),
        }
    }
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &lines) {
                return fail(format!("cannot write {}: {e}", path.display()));
            }
        }
        None => {
            if std::io::stdout().write_all(lines.as_bytes()).is_err() {
                return 2;
            }
        }
    }
    eprintln!(
        "generated {} pairs ({} skipped)",
        generated.pairs.len(),
        generated.skipped.len()
    );
    0
}

fn cmd_run(flags: &Overrides) -> i32 {
    let loaded = match build_plan(flags) {
        Ok(loaded) => loaded,
        Err(message) => return fail(message),
    };
    for warning in &loaded.warnings {
        eprintln!("{warning}");
    }
    let sut = loaded.plan.sut.clone();
    let adapter = match Adapter::new(sut, loaded.config.cache_dir.as_deref(), loaded.config.offline)
    {
        Ok(adapter) => adapter,
        Err(e) => return fail(e),
    };
    let embedding_adapter = match &loaded.plan.embedding_sut {
        Some(spec) => match Adapter::new(
            spec.clone(),
            loaded.config.cache_dir.as_deref(),
            loaded.config.offline,
        ) {
            Ok(adapter) => Some(adapter),
            Err(e) => return fail(e),
        },
        None => None,
    };
    if let Err(message) = preflight(&loaded.plan, &adapter) {
        return fail(message);
    }
    let store = match RunStore::new(&loaded.config.store_dir) {
        Ok(store) => store,
        Err(e) => return fail(e),
    };
    execute_and_store(
        &loaded.plan,
        &adapter,
        embedding_adapter.as_ref(),
        &store,
        &loaded.config_hash,
        Some(&loaded.config),
    )
}

/// Issues one real query before committing to the full run, so an
/// unreachable backend or a cold cache in offline mode surfaces as a
/// setup failure (exit 2) instead of a run full of inconclusive
/// verdicts. The probe reuses the first input's prompt; on HTTP
/// backends the response lands in the cache, so nothing is wasted.
fn preflight(plan: &RunPlan, adapter: &Adapter) -> Result<(), String> {
    let Some(input) = plan.suite.first() else {
        return Ok(());
    };
    let prompt = match input.prompt_template_id.as_deref().and_then(|id| plan.templates.get(id)) {
        Some(template) => template.replace("{text}", &input.text),
        None => input.text.clone(),
    };
    adapter
        .query(&prompt, 0)
        .map(|_| ())
        .map_err(|e| format!("SUT preflight failed: {e}"))
}

/// Runs a validated plan, persists it, prints the summary, and returns
/// the violations-aware exit code.
fn execute_and_store(
    plan: &RunPlan,
    adapter: &Adapter,
    embedding_adapter: Option<&Adapter>,
    store: &RunStore,
    config_hash: &str,
    echo: Option<&ResolvedConfig>,
) -> i32 {
    let generated = match engine::generate_pairs(plan) {
        Ok(generated) => generated,
        Err(e) => return fail(e),
    };
    let started = now_rfc3339();
    let outcome = match engine::execute(plan, &generated.pairs, adapter, embedding_adapter) {
        Ok(outcome) => outcome,
        Err(e) => return fail(e),
    };
    let finished = now_rfc3339();
    let run_id = store.fresh_run_id();
    let meta = RunMeta {
        run_id: run_id.clone(),
        model_id: adapter.spec().model_id.clone(),
        config_hash: config_hash.to_string(),
        started,
        finished,
    };
    let report = match RunReport::aggregate(&outcome.verdicts, &generated.pairs, meta) {
        Ok(report) => report,
        Err(e) => return fail(e),
    };
    if let Err(e) = store.persist_run(&report, &outcome.verdicts, &generated.pairs) {
        return fail(e);
    }
    let run_dir = store.run_dir(&run_id);
    if let Some(config) = echo {
        let text = metamorph::canon::canonical_json(config);
        if let Err(e) = std::fs::write(run_dir.join("config.json"), text) {
            return fail(format!("cannot echo config into run directory: {e}"));
        }
    }
    let mut log = String::new();
    for record in &outcome.log {
        match serde_json::to_string(record) {
            Ok(line) => {
                log.push_str(&line);
                log.push('\n');
            }
            Err(e) => return fail(e),
        }
    }
    if let Err(e) = std::fs::write(run_dir.join("log.jsonl"), log) {
        return fail(format!("cannot write run log: {e}"));
    }

    print_run_summary(&report, &generated.skipped.len(), &run_id);
    if report.total_violations() > 0 {
        1
    } else {
        0
    }
}

fn print_run_summary(report: &RunReport, skipped: &usize, run_id: &str) {
    let color = color_enabled();
    println!("run-id: {run_id}");
    println!("pairs: {} executed, {} skipped", report.total_pairs(), skipped);
    print!("{}", decorate_table(&render_table(report), color));
    let violations = report.total_violations();
    let line = format!("violations: {violations}");
    if violations > 0 {
        println!("{}", paint(&line, "31", color));
    } else {
        println!("{}", paint(&line, "32", color));
    }
}

/// Bolds the header line of a rendered table when color is on.
fn decorate_table(table: &str, color: bool) -> String {
    if !color {
        return table.to_string();
    }
    match table.split_once('\n') {
        Some((head, rest)) => format!("{}\n{rest}", paint(head, "1", true)),
        None => table.to_string(),
    }
}

// ---------------------------------------------------------------------
// report

fn cmd_report(run_id: &str, format: ReportFormat, store_dir: &Path) -> i32 {
    let store = match RunStore::new(store_dir) {
        Ok(store) => store,
        Err(e) => return fail(e),
    };
    let report = match store.load_report(run_id) {
        Ok(report) => report,
        Err(e) => return fail(e),
    };
    match format {
        ReportFormat::Json => {
            print!("{}", report.to_canonical_json());
        }
        ReportFormat::Junit => {
            let verdicts = match store.load_verdicts(run_id) {
                Ok(verdicts) => verdicts,
                Err(e) => return fail(e),
            };
            print!("{}", render_junit(&report, &verdicts));
        }
        ReportFormat::Table => {
            let triage = match store.load_triage(run_id) {
                Ok(triage) => triage,
                Err(e) => return fail(e),
            };
            let color = color_enabled();
            println!("run-id: {}", report.run_id);
            println!("model: {}", report.model_id);
            println!("config-hash: {}", report.config_hash);
            println!("window: {} .. {}", report.started, report.finished);
            print!("{}", decorate_table(&render_table(&report), color));
            let annotations = effective_annotations(&triage);
            println!(
                "true-positive rate: {}",
                render_tp_rate(true_positive_rate(&annotations))
            );
        }
    }
    0
}

// ---------------------------------------------------------------------
// diff

fn cmd_diff(run_a: &str, run_b: &str, epsilon: f64, force: bool, store_dir: &Path) -> i32 {
    if !(0.0..=1.0).contains(&epsilon) {
        return fail("epsilon must be within [0, 1]");
    }
    let store = match RunStore::new(store_dir) {
        Ok(store) => store,
        Err(e) => return fail(e),
    };
    let before = match store.load_report(run_a) {
        Ok(report) => report,
        Err(e) => return fail(e),
    };
    let after = match store.load_report(run_b) {
        Ok(report) => report,
        Err(e) => return fail(e),
    };
    if before.config_hash != after.config_hash && !force {
        return fail(format!(
            "runs are incomparable: config hashes differ ({}.. vs {}..); pass --force to compare anyway",
            &before.config_hash[..12.min(before.config_hash.len())],
            &after.config_hash[..12.min(after.config_hash.len())],
        ));
    }
    let drift = engine::drift_diff(&before, &after, epsilon);
    print!("{}", render_drift(&drift, color_enabled()));
    if drift.any_flagged() {
        1
    } else {
        0
    }
}

fn render_drift(drift: &DriftReport, color: bool) -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "relation".into(),
        "before".into(),
        "after".into(),
        "delta".into(),
        "flagged".into(),
    ]];
    for delta in &drift.deltas {
        rows.push([
            delta.mr_id.clone(),
            format!("{:.4}", delta.rate_before),
            format!("{:.4}", delta.rate_after),
            format!("{:+.4}", delta.delta),
            if delta.flagged { "yes".into() } else { String::new() },
        ]);
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (index, row) in rows.iter().enumerate() {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{:<width$}", cell, width = widths[i]));
            } else {
                line.push_str(&format!("{:>width$}", cell, width = widths[i]));
            }
        }
        let line = line.trim_end().to_string();
        if index == 0 {
            out.push_str(&paint(&line, "1", color));
        } else if row[4] == "yes" {
            out.push_str(&paint(&line, "31", color));
        } else {
            out.push_str(&line);
        }
        out.push('\n');
        if index == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    for mr_id in &drift.added {
        out.push_str(&format!("added: {mr_id}\n"));
    }
    for mr_id in &drift.removed {
        out.push_str(&format!("removed: {mr_id}\n"));
    }
    out
}

// ---------------------------------------------------------------------
// annotate

fn cmd_annotate(
    run_id: &str,
    pair_id: &str,
    judgment: Judgment,
    note: &str,
    annotator: Option<String>,
    store_dir: &Path,
) -> i32 {
    let store = match RunStore::new(store_dir) {
        Ok(store) => store,
        Err(e) => return fail(e),
    };
    let record = TriageRecord {
        run_id: run_id.to_string(),
        pair_id: pair_id.to_string(),
        annotation: match judgment {
            Judgment::Tp => Annotation::TruePositive,
            Judgment::Fp => Annotation::FalsePositive,
        },
        note: note.to_string(),
        annotator: annotator
            .or_else(|| std::env::var("USER").ok())
            .unwrap_or_else(|| "anonymous".to_string()),
    };
    if let Err(e) = store.annotate(&record) {
        return fail(e);
    }
    let triage = match store.load_triage(run_id) {
        Ok(triage) => triage,
        Err(e) => return fail(e),
    };
    let annotations = effective_annotations(&triage);
    println!(
        "recorded; true-positive rate: {}",
        render_tp_rate(true_positive_rate(&annotations))
    );
    0
}

// ---------------------------------------------------------------------
// demo

/// The canonical worked example: squaring satisfies f(x) = f(-x), so
/// negating the input must leave the output unchanged. The correct
/// implementation passes everywhere; the x*|x| mutant fails on every
/// nonzero input while the harness needs no knowledge of what the right
/// answer actually is.
fn cmd_demo(mutant: bool, store_dir: Option<&Path>) -> i32 {
    let suite: Vec<SourceInput> = (-12..=12)
        .map(|v: i64| SourceInput::new(format!("n{v}"), TaskKind::NumericDemo, v.to_string()))
        .collect();
    let relation = MetamorphicRelation {
        id: "square_negation_invariance".to_string(),
        name: "square_negation_invariance".to_string(),
        applies_to: AppliesTo::Tasks(BTreeSet::from([TaskKind::NumericDemo])),
        transform_pipeline: vec![TransformStep::new("negate-numeric")],
        output_relation: RelationKind::Equivalence,
        comparator: ComparatorSpec::new(ComparatorKind::Exact, 1.0, 0.0),
        repetitions: 1,
        aggregation: Aggregation::AnyViolation,
    };
    let builtin = if mutant { "square-mutant" } else { "square" };
    let mut sut = SutSpec::new(SutKind::BuiltinFunction, builtin);
    sut.model_id = builtin.to_string();
    let plan = RunPlan::new(suite, vec![relation], sut.clone());
    if let Err(e) = plan.validate() {
        return fail(e);
    }
    let adapter = match Adapter::new(sut, None, false) {
        Ok(adapter) => adapter,
        Err(e) => return fail(e),
    };
    match store_dir {
        Some(dir) => {
            let store = match RunStore::new(dir) {
                Ok(store) => store,
                Err(e) => return fail(e),
            };
            execute_and_store(&plan, &adapter, None, &store, "demo", None)
        }
        None => {
            let generated = match engine::generate_pairs(&plan) {
                Ok(generated) => generated,
                Err(e) => return fail(e),
            };
            let started = now_rfc3339();
            let outcome =
                match engine::execute(&plan, &generated.pairs, &adapter, None) {
                    Ok(outcome) => outcome,
                    Err(e) => return fail(e),
                };
            let meta = RunMeta {
                run_id: "demo".to_string(),
                model_id: builtin.to_string(),
                config_hash: "demo".to_string(),
                started,
                finished: now_rfc3339(),
            };
            let report =
                match RunReport::aggregate(&outcome.verdicts, &generated.pairs, meta) {
                    Ok(report) => report,
                    Err(e) => return fail(e),
                };
            print_run_summary(&report, &generated.skipped.len(), "demo (not stored)");
            if report.total_violations() > 0 {
                1
            } else {
                0
            }
        }
    }
}

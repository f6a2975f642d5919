//! Persistent run storage, violation triage, and report rendering.
//!
//! A store is a directory of runs. Each run directory holds the
//! aggregated report, the verdict and pair streams as JSON Lines, and an
//! append-only triage log:
//!
//! ```text
//! store/
//!   20260815T101112Z/
//!     report.json
//!     verdicts.jsonl
//!     pairs.jsonl
//!     triage.jsonl
//! ```
//!
//! Runs are immutable once persisted; triage annotations are the only
//! thing appended afterwards. There is no separate index file: the run
//! list is always rebuilt by scanning the store root, so a store copied
//! with plain `cp -r` keeps working.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::model::{Annotation, RunReport, TestPair, Verdict, VerdictOutcome};

const REPORT_FILE: &str = "report.json";
const VERDICTS_FILE: &str = "verdicts.jsonl";
const PAIRS_FILE: &str = "pairs.jsonl";
const TRIAGE_FILE: &str = "triage.jsonl";

/// Failures raised by store operations.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run {run_id:?} already exists in the store")]
    DuplicateRunId { run_id: String },
    #[error("run {run_id:?} is not in the store")]
    UnknownRunId { run_id: String },
    #[error("malformed record in {path} line {line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("cannot annotate {pair_id:?}: {reason}")]
    BadAnnotation { pair_id: String, reason: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> StoreError {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

/// One triage judgment on a violation verdict. Records are appended to
/// the run's triage log; when a pair is annotated more than once, the
/// latest record wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TriageRecord {
    pub run_id: String,
    pub pair_id: String,
    pub annotation: Annotation,
    pub note: String,
    pub annotator: String,
}

/// A directory of persisted runs.
#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl RunStore {
    /// Opens a store rooted at `root`, creating the directory if needed.
    pub fn new(root: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Mints a run id that is unused in this store: a UTC second
    /// timestamp, with a `-2`, `-3`, … suffix when the bare stamp is
    /// already taken.
    pub fn fresh_run_id(&self) -> String {
        let now = time::OffsetDateTime::now_utc();
        let stamp = format!(
            "{:04}{:02}{:02}T{:02}{:02}{:02}Z",
            now.year(),
            now.month() as u8,
            now.day(),
            now.hour(),
            now.minute(),
            now.second()
        );
        if !self.run_dir(&stamp).exists() {
            return stamp;
        }
        let mut ordinal = 2u64;
        loop {
            let candidate = format!("{stamp}-{ordinal}");
            if !self.run_dir(&candidate).exists() {
                return candidate;
            }
            ordinal += 1;
        }
    }

    /// Writes a run to the store under `report.run_id`. The run is
    /// staged in a hidden temp directory and published with a single
    /// rename, so a crash mid-write never leaves a half-visible run.
    pub fn persist_run(
        &self,
        report: &RunReport,
        verdicts: &[Verdict],
        pairs: &[TestPair],
    ) -> Result<(), StoreError> {
        let final_dir = self.run_dir(&report.run_id);
        if final_dir.exists() {
            return Err(StoreError::DuplicateRunId { run_id: report.run_id.clone() });
        }
        let staging = self.root.join(format!(
            ".tmp-{}-{}-{}",
            report.run_id,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir(&staging).map_err(|e| StoreError::io(&staging, e))?;
        let result = (|| {
            write_file(&staging.join(REPORT_FILE), report.to_canonical_json().as_bytes())?;
            write_file(&staging.join(VERDICTS_FILE), jsonl(verdicts)?.as_bytes())?;
            write_file(&staging.join(PAIRS_FILE), jsonl(pairs)?.as_bytes())?;
            write_file(&staging.join(TRIAGE_FILE), b"")?;
            match fs::rename(&staging, &final_dir) {
                Ok(()) => Ok(()),
                Err(e) if final_dir.exists() => {
                    let _ = e;
                    Err(StoreError::DuplicateRunId { run_id: report.run_id.clone() })
                }
                Err(e) => Err(StoreError::io(&final_dir, e)),
            }
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    /// Lists persisted run ids in ascending order. Hidden entries
    /// (staging directories, editor droppings) and directories without a
    /// report are skipped, so the listing survives interrupted writes.
    pub fn list_runs(&self) -> Result<Vec<String>, StoreError> {
        let entries = fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        let mut runs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| StoreError::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            if !entry.path().is_dir() || !entry.path().join(REPORT_FILE).is_file() {
                continue;
            }
            runs.push(name);
        }
        runs.sort();
        Ok(runs)
    }

    pub fn load_report(&self, run_id: &str) -> Result<RunReport, StoreError> {
        let path = self.run_dir(run_id).join(REPORT_FILE);
        let text = self.read_run_file(run_id, &path)?;
        serde_json::from_str(&text)
            .map_err(|e| StoreError::Malformed { path, line: e.line(), reason: e.to_string() })
    }

    pub fn load_verdicts(&self, run_id: &str) -> Result<Vec<Verdict>, StoreError> {
        let path = self.run_dir(run_id).join(VERDICTS_FILE);
        let text = self.read_run_file(run_id, &path)?;
        parse_jsonl(&text, &path)
    }

    pub fn load_pairs(&self, run_id: &str) -> Result<Vec<TestPair>, StoreError> {
        let path = self.run_dir(run_id).join(PAIRS_FILE);
        let text = self.read_run_file(run_id, &path)?;
        parse_jsonl(&text, &path)
    }

    /// Reads the triage log for a run; a missing log means no
    /// annotations yet.
    pub fn load_triage(&self, run_id: &str) -> Result<Vec<TriageRecord>, StoreError> {
        if !self.run_dir(run_id).exists() {
            return Err(StoreError::UnknownRunId { run_id: to_owned(run_id) });
        }
        let path = self.run_dir(run_id).join(TRIAGE_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => parse_jsonl(&text, &path),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(StoreError::io(&path, e)),
        }
    }

    /// Appends one triage record to a run. The target pair must hold a
    /// violation verdict in that run, and the annotation must be a
    /// judgment, not `unreviewed`.
    pub fn annotate(&self, record: &TriageRecord) -> Result<(), StoreError> {
        if record.annotation == Annotation::Unreviewed {
            return Err(StoreError::BadAnnotation {
                pair_id: record.pair_id.clone(),
                reason: "annotation must be true-positive or false-positive".into(),
            });
        }
        let verdicts = self.load_verdicts(&record.run_id)?;
        let target = verdicts.iter().find(|v| v.pair_id == record.pair_id);
        match target {
            None => {
                return Err(StoreError::BadAnnotation {
                    pair_id: record.pair_id.clone(),
                    reason: format!("run {:?} has no verdict for this pair", record.run_id),
                })
            }
            Some(v) if v.outcome != VerdictOutcome::Violation => {
                return Err(StoreError::BadAnnotation {
                    pair_id: record.pair_id.clone(),
                    reason: format!(
                        "verdict outcome is {:?}; only violations are triaged",
                        v.outcome
                    ),
                })
            }
            Some(_) => {}
        }
        let path = self.run_dir(&record.run_id).join(TRIAGE_FILE);
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        let line = serde_json::to_string(record).map_err(|e| StoreError::Malformed {
            path: path.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
        file.write_all(format!("{line}\n").as_bytes())
            .map_err(|e| StoreError::io(&path, e))?;
        Ok(())
    }

    fn read_run_file(&self, run_id: &str, path: &Path) -> Result<String, StoreError> {
        fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                StoreError::UnknownRunId { run_id: to_owned(run_id) }
            } else {
                StoreError::io(path, e)
            }
        })
    }
}

fn to_owned(run_id: &str) -> String {
    run_id.to_string()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    fs::write(path, bytes).map_err(|e| StoreError::io(path, e))
}

fn jsonl<T: Serialize>(records: &[T]) -> Result<String, StoreError> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| StoreError::Malformed {
            path: PathBuf::new(),
            line: 0,
            reason: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(
    text: &str,
    path: &Path,
) -> Result<Vec<T>, StoreError> {
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| StoreError::Malformed {
            path: path.to_path_buf(),
            line: index + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

// ---------------------------------------------------------------------
// Triage analysis

/// Collapses a triage log to one judgment per pair, latest record wins.
pub fn effective_annotations(records: &[TriageRecord]) -> BTreeMap<String, Annotation> {
    let mut map = BTreeMap::new();
    for record in records {
        map.insert(record.pair_id.clone(), record.annotation);
    }
    map
}

/// Fraction of annotated violations judged true positives. Undefined
/// (`None`) until at least one violation has been annotated; callers
/// must render that case as "n/a", never as zero.
pub fn true_positive_rate(annotations: &BTreeMap<String, Annotation>) -> Option<f64> {
    let annotated = annotations
        .values()
        .filter(|a| **a != Annotation::Unreviewed)
        .count() as f64;
    if annotated == 0.0 {
        return None;
    }
    let true_positives = annotations
        .values()
        .filter(|a| **a == Annotation::TruePositive)
        .count() as f64;
    Some(true_positives / annotated)
}

/// Renders a true-positive rate to two decimals, or "n/a" when no
/// violation has been annotated yet.
pub fn render_tp_rate(rate: Option<f64>) -> String {
    match rate {
        Some(rate) => format!("{rate:.2}"),
        None => "n/a".to_string(),
    }
}

// ---------------------------------------------------------------------
// Rendering

/// Renders a run as JUnit-style XML: one `<testsuite>` per relation, one
/// `<testcase>` per pair. Violations become `<failure>` elements and
/// inconclusive verdicts become `<skipped>` with their reason, so CI
/// dashboards show abstentions as skips rather than silent passes.
pub fn render_junit(report: &RunReport, verdicts: &[Verdict]) -> String {
    let mut by_mr: BTreeMap<&str, Vec<&Verdict>> = BTreeMap::new();
    for verdict in verdicts {
        by_mr.entry(&verdict.mr_id).or_default().push(verdict);
    }
    let mut totals = (0u64, 0u64, 0u64);
    for group in by_mr.values() {
        for v in group {
            totals.0 += 1;
            match v.outcome {
                VerdictOutcome::Violation => totals.1 += 1,
                VerdictOutcome::Inconclusive => totals.2 += 1,
                VerdictOutcome::Pass => {}
            }
        }
    }
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<testsuites name={} tests=\"{}\" failures=\"{}\" skipped=\"{}\">\n",
        xml_attr(&report.run_id),
        totals.0,
        totals.1,
        totals.2
    ));
    for (mr_id, group) in &by_mr {
        let failures = group.iter().filter(|v| v.outcome == VerdictOutcome::Violation).count();
        let skipped = group.iter().filter(|v| v.outcome == VerdictOutcome::Inconclusive).count();
        out.push_str(&format!(
            "  <testsuite name={} tests=\"{}\" failures=\"{}\" skipped=\"{}\">\n",
            xml_attr(mr_id),
            group.len(),
            failures,
            skipped
        ));
        for verdict in group {
            out.push_str(&format!(
                "    <testcase name={} classname={}",
                xml_attr(&verdict.pair_id),
                xml_attr(mr_id)
            ));
            match verdict.outcome {
                VerdictOutcome::Pass => out.push_str("/>\n"),
                VerdictOutcome::Violation => {
                    out.push_str(&format!(
                        ">\n      <failure message={}>{}</failure>\n    </testcase>\n",
                        xml_attr("metamorphic relation violated"),
                        xml_text(&verdict.detail)
                    ));
                }
                VerdictOutcome::Inconclusive => {
                    let reason = verdict
                        .inconclusive_reason
                        .map(|r| r.name())
                        .unwrap_or("inconclusive");
                    out.push_str(&format!(
                        ">\n      <skipped message={}>{}</skipped>\n    </testcase>\n",
                        xml_attr(reason),
                        xml_text(&verdict.detail)
                    ));
                }
            }
        }
        out.push_str("  </testsuite>\n");
    }
    out.push_str("</testsuites>\n");
    out
}

/// Renders the per-relation tallies as a fixed-width text table sorted
/// by relation id, with an overall row at the bottom.
pub fn render_table(report: &RunReport) -> String {
    let mut rows: Vec<[String; 6]> = Vec::new();
    rows.push([
        "relation".into(),
        "pairs".into(),
        "passes".into(),
        "violations".into(),
        "inconclusive".into(),
        "failure-rate".into(),
    ]);
    let mut overall = (0u64, 0u64, 0u64, 0u64);
    for (mr_id, tally) in &report.per_mr {
        overall.0 += tally.pairs;
        overall.1 += tally.passes;
        overall.2 += tally.violations;
        overall.3 += tally.inconclusive;
        rows.push([
            mr_id.clone(),
            tally.pairs.to_string(),
            tally.passes.to_string(),
            tally.violations.to_string(),
            tally.inconclusive.to_string(),
            format!("{:.4}", tally.failure_rate),
        ]);
    }
    rows.push([
        "(overall)".into(),
        overall.0.to_string(),
        overall.1.to_string(),
        overall.2.to_string(),
        overall.3.to_string(),
        format!("{:.4}", crate::model::failure_rate(overall.2, overall.1)),
    ]);
    let mut widths = [0usize; 6];
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
        out.push_str(line.trim_end());
        out.push('\n');
        if index == 0 {
            let rule_len = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(rule_len));
            out.push('\n');
        }
    }
    out
}

fn xml_attr(value: &str) -> String {
    format!("\"{}\"", xml_escape(value, true))
}

fn xml_text(value: &str) -> String {
    xml_escape(value, false)
}

fn xml_escape(value: &str, in_attr: bool) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if in_attr => out.push_str("&quot;"),
            '\'' if in_attr => out.push_str("&apos;"),
            other => out.push(other),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pair_id, InconclusiveReason, RunMeta, SourceInput, TaskKind};
    use tempfile::tempdir;

    fn sample_pair(input_id: &str, mr_id: &str) -> TestPair {
        let source = SourceInput::new(input_id, TaskKind::Generic, format!("text {input_id}"));
        let mut followup = source.clone();
        followup.text.push_str(" tweaked");
        TestPair {
            source,
            followup,
            mr_id: mr_id.to_string(),
            provenance: Vec::new(),
            derivation_seed: 7,
        }
    }

    fn sample_run(run_id: &str) -> (RunReport, Vec<Verdict>, Vec<TestPair>) {
        let pairs = vec![
            sample_pair("a", "mr-x"),
            sample_pair("b", "mr-x"),
            sample_pair("c", "mr-y"),
        ];
        let verdicts = vec![
            Verdict::pass(pair_id("a", "mr-x"), "mr-x".into(), Some(1.0), "ok".into()),
            Verdict::violation(
                pair_id("b", "mr-x"),
                "mr-x".into(),
                Some(0.2),
                "outputs diverged: <left> & \"right\"".into(),
            ),
            Verdict::inconclusive(
                pair_id("c", "mr-y"),
                "mr-y".into(),
                InconclusiveReason::SutError,
                "backend offline".into(),
            ),
        ];
        let meta = RunMeta {
            run_id: run_id.to_string(),
            model_id: "mock".into(),
            config_hash: "cafe".into(),
            started: "2026-08-15T10:00:00Z".into(),
            finished: "2026-08-15T10:00:01Z".into(),
        };
        let report = RunReport::aggregate(&verdicts, &pairs, meta).unwrap();
        (report, verdicts, pairs)
    }

    #[test]
    fn persist_and_load_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let (report, verdicts, pairs) = sample_run("20260815T100000Z");
        store.persist_run(&report, &verdicts, &pairs).unwrap();

        let loaded = store.load_report("20260815T100000Z").unwrap();
        assert_eq!(loaded.to_canonical_json(), report.to_canonical_json());
        assert_eq!(store.load_verdicts("20260815T100000Z").unwrap(), verdicts);
        assert_eq!(store.load_pairs("20260815T100000Z").unwrap(), pairs);

        let raw = std::fs::read_to_string(
            store.run_dir("20260815T100000Z").join(REPORT_FILE),
        )
        .unwrap();
        assert_eq!(raw, report.to_canonical_json());
    }

    #[test]
    fn duplicate_run_id_is_rejected() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let (report, verdicts, pairs) = sample_run("r1");
        store.persist_run(&report, &verdicts, &pairs).unwrap();
        let err = store.persist_run(&report, &verdicts, &pairs).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateRunId { run_id } if run_id == "r1"));
    }

    #[test]
    fn fresh_run_ids_in_the_same_second_get_ordinal_suffixes() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let first = store.fresh_run_id();
        let (report, verdicts, pairs) = sample_run(&first);
        store.persist_run(&report, &verdicts, &pairs).unwrap();
        let second = store.fresh_run_id();
        assert_ne!(first, second);
        if second.starts_with(&first) {
            assert_eq!(second, format!("{first}-2"));
        }
    }

    #[test]
    fn listing_skips_staging_dirs_and_strays() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let (report, verdicts, pairs) = sample_run("r-listed");
        store.persist_run(&report, &verdicts, &pairs).unwrap();

        std::fs::create_dir(dir.path().join(".tmp-r-half-written")).unwrap();
        std::fs::write(dir.path().join(".tmp-r-half-written").join(REPORT_FILE), "{}").unwrap();
        std::fs::create_dir(dir.path().join("not-a-run")).unwrap();
        std::fs::write(dir.path().join("stray.txt"), "noise").unwrap();

        assert_eq!(store.list_runs().unwrap(), vec!["r-listed".to_string()]);
    }

    #[test]
    fn unknown_run_id_is_reported() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let err = store.load_report("ghost").unwrap_err();
        assert!(matches!(err, StoreError::UnknownRunId { run_id } if run_id == "ghost"));
    }

    #[test]
    fn annotation_requires_an_existing_violation() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let (report, verdicts, pairs) = sample_run("r1");
        store.persist_run(&report, &verdicts, &pairs).unwrap();

        let mut record = TriageRecord {
            run_id: "r1".into(),
            pair_id: pair_id("a", "mr-x"),
            annotation: Annotation::TruePositive,
            note: "real regression".into(),
            annotator: "ana".into(),
        };
        let err = store.annotate(&record).unwrap_err();
        assert!(matches!(err, StoreError::BadAnnotation { .. }), "{err}");

        record.pair_id = pair_id("zz", "mr-x");
        assert!(store.annotate(&record).is_err());

        record.pair_id = pair_id("b", "mr-x");
        record.annotation = Annotation::Unreviewed;
        assert!(store.annotate(&record).is_err());

        record.annotation = Annotation::TruePositive;
        store.annotate(&record).unwrap();
        assert_eq!(store.load_triage("r1").unwrap(), vec![record]);
    }

    #[test]
    fn latest_annotation_wins() {
        let dir = tempdir().unwrap();
        let store = RunStore::new(dir.path()).unwrap();
        let (report, verdicts, pairs) = sample_run("r1");
        store.persist_run(&report, &verdicts, &pairs).unwrap();

        let mut record = TriageRecord {
            run_id: "r1".into(),
            pair_id: pair_id("b", "mr-x"),
            annotation: Annotation::TruePositive,
            note: String::new(),
            annotator: "ana".into(),
        };
        store.annotate(&record).unwrap();
        record.annotation = Annotation::FalsePositive;
        record.note = "flaky backend, retracted".into();
        store.annotate(&record).unwrap();

        let log = store.load_triage("r1").unwrap();
        assert_eq!(log.len(), 2);
        let effective = effective_annotations(&log);
        assert_eq!(effective[&pair_id("b", "mr-x")], Annotation::FalsePositive);
    }

    #[test]
    fn true_positive_rate_follows_the_annotated_fraction() {
        let mut annotations = BTreeMap::new();
        assert_eq!(true_positive_rate(&annotations), None);
        assert_eq!(render_tp_rate(None), "n/a");

        for i in 0..3 {
            annotations.insert(format!("tp-{i}"), Annotation::TruePositive);
        }
        for i in 0..2 {
            annotations.insert(format!("fp-{i}"), Annotation::FalsePositive);
        }
        let rate = true_positive_rate(&annotations).unwrap();
        assert_eq!(rate, 0.6);
        assert_eq!(render_tp_rate(Some(rate)), "0.60");
    }

    #[test]
    fn large_triage_sample_renders_to_two_decimals() {
        let mut annotations = BTreeMap::new();
        for i in 0..937u32 {
            let judgment = if i < 581 {
                Annotation::TruePositive
            } else {
                Annotation::FalsePositive
            };
            annotations.insert(format!("pair-{i}"), judgment);
        }
        let rate = true_positive_rate(&annotations).unwrap();
        assert_eq!(render_tp_rate(Some(rate)), "0.62");
    }

    #[test]
    fn junit_groups_by_relation_and_marks_outcomes() {
        let (report, verdicts, _) = sample_run("r1");
        let xml = render_junit(&report, &verdicts);
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "testsuites");
        let suites: Vec<_> =
            root.children().filter(|n| n.has_tag_name("testsuite")).collect();
        assert_eq!(suites.len(), 2);
        assert_eq!(suites[0].attribute("name"), Some("mr-x"));
        assert_eq!(suites[0].attribute("failures"), Some("1"));
        assert_eq!(suites[1].attribute("skipped"), Some("1"));

        let cases: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("testcase")).collect();
        assert_eq!(cases.len(), 3);
        let failure = doc.descendants().find(|n| n.has_tag_name("failure")).unwrap();
        assert_eq!(failure.text().unwrap(), "outputs diverged: <left> & \"right\"");
        let skipped = doc.descendants().find(|n| n.has_tag_name("skipped")).unwrap();
        assert_eq!(skipped.attribute("message"), Some("sut-error"));
    }

    #[test]
    fn junit_for_an_empty_run_is_valid_with_zero_suites() {
        let report =
            RunReport::aggregate(&[], &[], RunMeta::default()).unwrap();
        let xml = render_junit(&report, &[]);
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "testsuites");
        assert_eq!(root.attribute("tests"), Some("0"));
        assert_eq!(root.children().filter(|n| n.has_tag_name("testsuite")).count(), 0);
    }

    #[test]
    fn table_rows_are_sorted_and_column_aligned() {
        let (report, _, _) = sample_run("r1");
        let table = render_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("relation"));
        let x_row = lines.iter().position(|l| l.starts_with("mr-x")).unwrap();
        let y_row = lines.iter().position(|l| l.starts_with("mr-y")).unwrap();
        assert!(x_row < y_row);
        assert!(lines.last().unwrap().starts_with("(overall)"));
        assert!(table.contains("0.5000"), "{table}");
    }
}

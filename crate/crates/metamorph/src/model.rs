//! Shared domain vocabulary: inputs, relations, pairs, verdicts, and run
//! reports, plus the pure accounting functions over them.
//!
//! Everything here is an immutable value after construction and safe to
//! share across workers. Tallying never reads a clock; timestamps are
//! injected by the caller.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relations::{ComparatorSpec, RelationKind};
use crate::transforms::TransformStep;

/// The task a suite input belongs to. Closed set; unknown tags are
/// rejected when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    SentimentAnalysis,
    QuestionAnswering,
    RelationExtraction,
    Summarization,
    NumericDemo,
    Generic,
}

impl TaskKind {
    pub const ALL: &'static [TaskKind] = &[
        TaskKind::SentimentAnalysis,
        TaskKind::QuestionAnswering,
        TaskKind::RelationExtraction,
        TaskKind::Summarization,
        TaskKind::NumericDemo,
        TaskKind::Generic,
    ];

    /// Stable tag used in suite files, reports, and the DSL.
    pub fn tag(&self) -> &'static str {
        match self {
            TaskKind::SentimentAnalysis => "sentiment-analysis",
            TaskKind::QuestionAnswering => "question-answering",
            TaskKind::RelationExtraction => "relation-extraction",
            TaskKind::Summarization => "summarization",
            TaskKind::NumericDemo => "numeric-demo",
            TaskKind::Generic => "generic",
        }
    }

    /// Parses a tag, accepting `_` as a separator alias for `-`.
    pub fn parse(tag: &str) -> Result<TaskKind, ModelError> {
        let normalized = tag.replace('_', "-");
        TaskKind::ALL
            .iter()
            .copied()
            .find(|k| k.tag() == normalized)
            .ok_or_else(|| ModelError::UnknownTask { tag: tag.to_string() })
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl Serialize for TaskKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for TaskKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        TaskKind::parse(&tag).map_err(serde::de::Error::custom)
    }
}

/// Metadata keys holding the two entity spans consumed by the
/// `swap-entities` transform. Values are byte ranges written `start..end`.
pub const ENTITY_SPAN_KEYS: [&str; 2] = ["entity-a", "entity-b"];

/// One test input: the unit the suite is made of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInput {
    pub id: String,
    pub task: TaskKind,
    pub text: String,
    /// String-keyed metadata: entity spans (`entity-a`/`entity-b` as
    /// `start..end` byte offsets) and label hints.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template_id: Option<String>,
}

impl SourceInput {
    pub fn new(id: impl Into<String>, task: TaskKind, text: impl Into<String>) -> SourceInput {
        SourceInput {
            id: id.into(),
            task,
            text: text.into(),
            metadata: BTreeMap::new(),
            prompt_template_id: None,
        }
    }

    /// Checks the per-input invariants: non-empty text, valid entity spans.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.text.is_empty() {
            return Err(ModelError::EmptyText { id: self.id.clone() });
        }
        let spans = self.entity_spans()?;
        if let [Some(a), Some(b)] = spans {
            if a.0 < b.1 && b.0 < a.1 {
                return Err(ModelError::SpanInvalid {
                    id: self.id.clone(),
                    reason: "entity spans overlap".to_string(),
                });
            }
        }
        Ok(())
    }

    /// Parses the `entity-a` / `entity-b` metadata spans, validating bounds
    /// and character-boundary alignment against `text`.
    pub fn entity_spans(&self) -> Result<[Option<(usize, usize)>; 2], ModelError> {
        let mut spans = [None, None];
        for (slot, key) in ENTITY_SPAN_KEYS.iter().enumerate() {
            let Some(raw) = self.metadata.get(*key) else {
                continue;
            };
            let parsed = parse_span(raw).ok_or_else(|| ModelError::SpanInvalid {
                id: self.id.clone(),
                reason: format!("metadata {key} is not a start..end byte range: {raw:?}"),
            })?;
            let (start, end) = parsed;
            if start >= end || end > self.text.len() {
                return Err(ModelError::SpanInvalid {
                    id: self.id.clone(),
                    reason: format!("span {start}..{end} out of bounds for {key}"),
                });
            }
            if !self.text.is_char_boundary(start) || !self.text.is_char_boundary(end) {
                return Err(ModelError::SpanInvalid {
                    id: self.id.clone(),
                    reason: format!("span {start}..{end} not on character boundaries"),
                });
            }
            spans[slot] = Some(parsed);
        }
        Ok(spans)
    }
}

fn parse_span(raw: &str) -> Option<(usize, usize)> {
    let (start, end) = raw.split_once("..")?;
    Some((start.trim().parse().ok()?, end.trim().parse().ok()?))
}

/// Validates a whole suite: per-input invariants plus id uniqueness.
pub fn validate_suite(inputs: &[SourceInput]) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for input in inputs {
        input.validate()?;
        if !seen.insert(input.id.as_str()) {
            return Err(ModelError::DuplicateInputId { id: input.id.clone() });
        }
    }
    Ok(())
}

/// Which tasks a relation applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AppliesTo {
    Any,
    Tasks(BTreeSet<TaskKind>),
}

impl AppliesTo {
    pub fn includes(&self, task: TaskKind) -> bool {
        match self {
            AppliesTo::Any => true,
            AppliesTo::Tasks(tasks) => tasks.contains(&task),
        }
    }
}

/// How per-repetition verdicts combine into one pair verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Violation if any repetition violates.
    AnyViolation,
    /// Majority outcome among decided repetitions.
    Majority,
    /// Violation only if all decided repetitions violate.
    All,
}

impl Aggregation {
    pub fn name(&self) -> &'static str {
        match self {
            Aggregation::AnyViolation => "any-violation",
            Aggregation::Majority => "majority",
            Aggregation::All => "all",
        }
    }
}

/// A declared metamorphic relation: an input transformation pipeline plus
/// the output relation and comparator policy that must hold across it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetamorphicRelation {
    pub id: String,
    pub name: String,
    pub applies_to: AppliesTo,
    pub transform_pipeline: Vec<TransformStep>,
    pub output_relation: RelationKind,
    pub comparator: ComparatorSpec,
    pub repetitions: u32,
    pub aggregation: Aggregation,
}

impl MetamorphicRelation {
    /// Checks the structural invariants: non-empty pipeline, positive
    /// repetitions, odd repetitions under majority aggregation.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.transform_pipeline.is_empty() {
            return Err(ModelError::EmptyPipeline { mr_id: self.id.clone() });
        }
        if self.repetitions == 0 {
            return Err(ModelError::BadRepetitions {
                mr_id: self.id.clone(),
                reason: "repetitions must be at least 1".to_string(),
            });
        }
        if self.aggregation == Aggregation::Majority && self.repetitions.is_multiple_of(2) {
            return Err(ModelError::BadRepetitions {
                mr_id: self.id.clone(),
                reason: "majority aggregation requires odd repetitions".to_string(),
            });
        }
        Ok(())
    }
}

/// One recorded transform application inside a pair's provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    pub transform: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
}

/// A source input and its derived follow-up, with enough provenance to
/// re-derive the follow-up byte-identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPair {
    pub source: SourceInput,
    pub followup: SourceInput,
    pub mr_id: String,
    pub provenance: Vec<ProvenanceStep>,
    pub derivation_seed: u64,
}

impl TestPair {
    /// Stable pair identifier: `<source id>::<mr id>`. Unique because input
    /// ids are unique within a suite and relation ids within a document.
    pub fn pair_id(&self) -> String {
        pair_id(&self.source.id, &self.mr_id)
    }
}

pub fn pair_id(input_id: &str, mr_id: &str) -> String {
    format!("{input_id}::{mr_id}")
}

/// Outcome of checking one pair against its output relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictOutcome {
    Pass,
    Violation,
    Inconclusive,
}

/// Why a verdict was withheld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InconclusiveReason {
    TransformInapplicable,
    SutError,
    UncertaintyBand,
}

impl InconclusiveReason {
    pub fn name(&self) -> &'static str {
        match self {
            InconclusiveReason::TransformInapplicable => "transform-inapplicable",
            InconclusiveReason::SutError => "sut-error",
            InconclusiveReason::UncertaintyBand => "uncertainty-band",
        }
    }
}

/// Triage state of a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Annotation {
    #[default]
    Unreviewed,
    TruePositive,
    FalsePositive,
}

/// Pass / violation / inconclusive outcome for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair_id: String,
    pub mr_id: String,
    pub outcome: VerdictOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive_reason: Option<InconclusiveReason>,
    #[serde(default)]
    pub annotation: Annotation,
}

impl Verdict {
    pub fn pass(pair_id: String, mr_id: String, score: Option<f64>, detail: String) -> Verdict {
        Verdict {
            pair_id,
            mr_id,
            outcome: VerdictOutcome::Pass,
            score,
            detail,
            inconclusive_reason: None,
            annotation: Annotation::Unreviewed,
        }
    }

    pub fn violation(
        pair_id: String,
        mr_id: String,
        score: Option<f64>,
        detail: String,
    ) -> Verdict {
        Verdict {
            pair_id,
            mr_id,
            outcome: VerdictOutcome::Violation,
            score,
            detail,
            inconclusive_reason: None,
            annotation: Annotation::Unreviewed,
        }
    }

    pub fn inconclusive(
        pair_id: String,
        mr_id: String,
        reason: InconclusiveReason,
        detail: String,
    ) -> Verdict {
        Verdict {
            pair_id,
            mr_id,
            outcome: VerdictOutcome::Inconclusive,
            score: None,
            detail,
            inconclusive_reason: Some(reason),
            annotation: Annotation::Unreviewed,
        }
    }

    /// Checks the verdict invariants: inconclusive outcomes carry a reason
    /// (and only they do), annotations only attach to violations.
    pub fn validate(&self) -> Result<(), ModelError> {
        let inconclusive = self.outcome == VerdictOutcome::Inconclusive;
        if inconclusive != self.inconclusive_reason.is_some() {
            return Err(ModelError::InvalidVerdict {
                pair_id: self.pair_id.clone(),
                reason: "inconclusive outcome and inconclusive-reason must appear together"
                    .to_string(),
            });
        }
        if self.annotation != Annotation::Unreviewed && self.outcome != VerdictOutcome::Violation {
            return Err(ModelError::InvalidVerdict {
                pair_id: self.pair_id.clone(),
                reason: "only violations can carry a triage annotation".to_string(),
            });
        }
        Ok(())
    }
}

/// Violations over decided outcomes. Zero when nothing was decided;
/// inconclusive verdicts never enter the denominator.
pub fn failure_rate(violations: u64, passes: u64) -> f64 {
    let decided = violations + passes;
    if decided == 0 {
        0.0
    } else {
        violations as f64 / decided as f64
    }
}

/// Rounds a rate to four decimal digits, the precision reports carry so
/// canonical serializations stay byte-comparable.
pub fn round_rate(rate: f64) -> f64 {
    (rate * 10_000.0).round() / 10_000.0
}

/// Per-relation or per-task verdict tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Tally {
    pub pairs: u64,
    pub passes: u64,
    pub violations: u64,
    pub inconclusive: u64,
    pub failure_rate: f64,
}

impl Tally {
    fn record(&mut self, outcome: VerdictOutcome) {
        self.pairs += 1;
        match outcome {
            VerdictOutcome::Pass => self.passes += 1,
            VerdictOutcome::Violation => self.violations += 1,
            VerdictOutcome::Inconclusive => self.inconclusive += 1,
        }
    }

    fn finalize(&mut self) {
        self.failure_rate = round_rate(failure_rate(self.violations, self.passes));
    }
}

/// Run metadata injected into report aggregation. Timestamps are RFC 3339
/// strings produced by the caller; tallying itself never reads a clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RunMeta {
    pub run_id: String,
    pub model_id: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
}

/// Per-MR and per-task failure-rate statistics for one run; the unit of
/// drift comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub model_id: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub per_mr: BTreeMap<String, Tally>,
    pub per_task: BTreeMap<TaskKind, Tally>,
}

impl RunReport {
    /// Tallies verdicts into a report. Pure: identical inputs produce an
    /// identical report regardless of verdict order.
    pub fn aggregate(
        verdicts: &[Verdict],
        pairs: &[TestPair],
        meta: RunMeta,
    ) -> Result<RunReport, ModelError> {
        let by_id: BTreeMap<String, &TestPair> =
            pairs.iter().map(|p| (p.pair_id(), p)).collect();
        let mut per_mr: BTreeMap<String, Tally> = BTreeMap::new();
        let mut per_task: BTreeMap<TaskKind, Tally> = BTreeMap::new();
        for verdict in verdicts {
            let pair = by_id.get(&verdict.pair_id).ok_or_else(|| {
                ModelError::UnknownPairId { pair_id: verdict.pair_id.clone() }
            })?;
            per_mr
                .entry(pair.mr_id.clone())
                .or_default()
                .record(verdict.outcome);
            per_task
                .entry(pair.source.task)
                .or_default()
                .record(verdict.outcome);
        }
        for tally in per_mr.values_mut().chain(per_task.values_mut()) {
            tally.finalize();
        }
        Ok(RunReport {
            run_id: meta.run_id,
            model_id: meta.model_id,
            config_hash: meta.config_hash,
            started: meta.started,
            finished: meta.finished,
            per_mr,
            per_task,
        })
    }

    /// Canonical JSON rendering: sorted keys, UTF-8, LF line endings.
    pub fn to_canonical_json(&self) -> String {
        crate::canon::canonical_json(self)
    }

    pub fn total_pairs(&self) -> u64 {
        self.per_mr.values().map(|t| t.pairs).sum()
    }

    pub fn total_violations(&self) -> u64 {
        self.per_mr.values().map(|t| t.violations).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown task tag: {tag:?}")]
    UnknownTask { tag: String },
    #[error("input {id:?} has empty text")]
    EmptyText { id: String },
    #[error("input {id:?}: {reason}")]
    SpanInvalid { id: String, reason: String },
    #[error("duplicate input id {id:?} in suite")]
    DuplicateInputId { id: String },
    #[error("relation {mr_id:?} has an empty transform pipeline")]
    EmptyPipeline { mr_id: String },
    #[error("relation {mr_id:?}: {reason}")]
    BadRepetitions { mr_id: String, reason: String },
    #[error("verdict for {pair_id:?}: {reason}")]
    InvalidVerdict { pair_id: String, reason: String },
    #[error("verdict references unknown pair id {pair_id:?}")]
    UnknownPairId { pair_id: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::{ComparatorKind, ComparatorSpec, RelationKind};
    use crate::transforms::TransformStep;

    fn relation(id: &str) -> MetamorphicRelation {
        MetamorphicRelation {
            id: id.to_string(),
            name: id.to_string(),
            applies_to: AppliesTo::Any,
            transform_pipeline: vec![TransformStep::new("misspell")],
            output_relation: RelationKind::Equivalence,
            comparator: ComparatorSpec::new(ComparatorKind::Exact, 1.0, 0.0),
            repetitions: 1,
            aggregation: Aggregation::AnyViolation,
        }
    }

    fn pair(input_id: &str, mr_id: &str, task: TaskKind) -> TestPair {
        let source = SourceInput::new(input_id, task, "some source text");
        let mut followup = source.clone();
        followup.id = format!("{input_id}~{mr_id}");
        followup.text = "some followup text".to_string();
        TestPair {
            source,
            followup,
            mr_id: mr_id.to_string(),
            provenance: vec![],
            derivation_seed: 0,
        }
    }

    #[test]
    fn failure_rate_matches_ratio_arithmetic() {
        assert_eq!(failure_rate(18, 82), 0.18);
        assert_eq!(failure_rate(0, 100), 0.0);
        assert_eq!(failure_rate(4, 1), 0.8);
        assert_eq!(failure_rate(0, 0), 0.0);
    }

    #[test]
    fn failure_rate_is_monotone() {
        for v in 0..20u64 {
            for p in 0..20u64 {
                let base = failure_rate(v, p);
                assert!(failure_rate(v + 1, p) >= base);
                assert!(failure_rate(v, p + 1) <= base);
            }
        }
    }

    #[test]
    fn aggregate_tallies_one_mr() {
        let pairs = vec![
            pair("a", "mr1", TaskKind::Generic),
            pair("b", "mr1", TaskKind::Generic),
            pair("c", "mr1", TaskKind::Generic),
        ];
        let verdicts = vec![
            Verdict::pass(pairs[0].pair_id(), "mr1".into(), None, String::new()),
            Verdict::violation(pairs[1].pair_id(), "mr1".into(), None, String::new()),
            Verdict::inconclusive(
                pairs[2].pair_id(),
                "mr1".into(),
                InconclusiveReason::SutError,
                String::new(),
            ),
        ];
        let report = RunReport::aggregate(&verdicts, &pairs, RunMeta::default()).unwrap();
        let tally = &report.per_mr["mr1"];
        assert_eq!(
            (tally.pairs, tally.passes, tally.violations, tally.inconclusive),
            (3, 1, 1, 1)
        );
        assert_eq!(tally.failure_rate, 0.5);
    }

    #[test]
    fn aggregate_empty_is_empty() {
        let report = RunReport::aggregate(&[], &[], RunMeta::default()).unwrap();
        assert!(report.per_mr.is_empty());
        assert!(report.per_task.is_empty());
        assert_eq!(report.total_pairs(), 0);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let mut pairs = Vec::new();
        let mut verdicts = Vec::new();
        for i in 0..10 {
            let mr = if i % 2 == 0 { "mr-even" } else { "mr-odd" };
            let task = if i < 5 { TaskKind::Generic } else { TaskKind::Summarization };
            let p = pair(&format!("in-{i}"), mr, task);
            let v = match i % 3 {
                0 => Verdict::pass(p.pair_id(), mr.into(), None, String::new()),
                1 => Verdict::violation(p.pair_id(), mr.into(), None, String::new()),
                _ => Verdict::inconclusive(
                    p.pair_id(),
                    mr.into(),
                    InconclusiveReason::UncertaintyBand,
                    String::new(),
                ),
            };
            pairs.push(p);
            verdicts.push(v);
        }
        let sorted = RunReport::aggregate(&verdicts, &pairs, RunMeta::default()).unwrap();
        verdicts.reverse();
        let mut interleaved = verdicts.split_off(4);
        interleaved.extend(verdicts);
        let shuffled = RunReport::aggregate(&interleaved, &pairs, RunMeta::default()).unwrap();
        assert_eq!(
            sorted.to_canonical_json(),
            shuffled.to_canonical_json(),
            "reports must be byte-identical regardless of verdict order"
        );
    }

    #[test]
    fn aggregate_rejects_unknown_pair() {
        let pairs = vec![pair("a", "mr1", TaskKind::Generic)];
        let verdicts = vec![Verdict::pass("ghost::mr1".into(), "mr1".into(), None, String::new())];
        let err = RunReport::aggregate(&verdicts, &pairs, RunMeta::default()).unwrap_err();
        assert_eq!(err, ModelError::UnknownPairId { pair_id: "ghost::mr1".into() });
    }

    #[test]
    fn per_task_and_per_mr_totals_agree() {
        let pairs = vec![
            pair("a", "mr1", TaskKind::Generic),
            pair("b", "mr2", TaskKind::Summarization),
            pair("c", "mr2", TaskKind::Generic),
        ];
        let verdicts: Vec<Verdict> = pairs
            .iter()
            .map(|p| Verdict::pass(p.pair_id(), p.mr_id.clone(), None, String::new()))
            .collect();
        let report = RunReport::aggregate(&verdicts, &pairs, RunMeta::default()).unwrap();
        let mr_total: u64 = report.per_mr.values().map(|t| t.pairs).sum();
        let task_total: u64 = report.per_task.values().map(|t| t.pairs).sum();
        assert_eq!(mr_total, verdicts.len() as u64);
        assert_eq!(task_total, verdicts.len() as u64);
        for tally in report.per_mr.values().chain(report.per_task.values()) {
            assert_eq!(tally.pairs, tally.passes + tally.violations + tally.inconclusive);
        }
    }

    #[test]
    fn canonical_report_rate_has_four_decimals() {
        let pairs = vec![
            pair("a", "mr1", TaskKind::Generic),
            pair("b", "mr1", TaskKind::Generic),
            pair("c", "mr1", TaskKind::Generic),
        ];
        let verdicts = vec![
            Verdict::violation(pairs[0].pair_id(), "mr1".into(), None, String::new()),
            Verdict::pass(pairs[1].pair_id(), "mr1".into(), None, String::new()),
            Verdict::pass(pairs[2].pair_id(), "mr1".into(), None, String::new()),
        ];
        let report = RunReport::aggregate(&verdicts, &pairs, RunMeta::default()).unwrap();
        // 1/3 rounded to four decimal digits.
        assert_eq!(report.per_mr["mr1"].failure_rate, 0.3333);
        assert!(report.to_canonical_json().contains("0.3333"));
    }

    #[test]
    fn task_tags_round_trip() {
        for task in TaskKind::ALL {
            assert_eq!(TaskKind::parse(task.tag()).unwrap(), *task);
        }
        assert!(TaskKind::parse("poetry-critique").is_err());
        assert_eq!(
            TaskKind::parse("sentiment_analysis").unwrap(),
            TaskKind::SentimentAnalysis
        );
    }

    #[test]
    fn suite_validation_catches_duplicates_and_spans() {
        let a = SourceInput::new("a", TaskKind::Generic, "hello world");
        let dup = vec![a.clone(), a.clone()];
        assert!(matches!(
            validate_suite(&dup),
            Err(ModelError::DuplicateInputId { .. })
        ));

        let mut spanned = SourceInput::new("s", TaskKind::RelationExtraction, "Alice likes Bob");
        spanned.metadata.insert("entity-a".into(), "0..5".into());
        spanned.metadata.insert("entity-b".into(), "12..15".into());
        assert!(spanned.validate().is_ok());

        spanned.metadata.insert("entity-b".into(), "3..8".into());
        assert!(matches!(
            spanned.validate(),
            Err(ModelError::SpanInvalid { .. })
        ));

        spanned.metadata.insert("entity-b".into(), "12..99".into());
        assert!(spanned.validate().is_err());
    }

    #[test]
    fn empty_text_rejected() {
        let input = SourceInput::new("e", TaskKind::Generic, "");
        assert_eq!(input.validate().unwrap_err(), ModelError::EmptyText { id: "e".into() });
    }

    #[test]
    fn relation_invariants() {
        let mut mr = relation("m");
        assert!(mr.validate().is_ok());
        mr.repetitions = 2;
        mr.aggregation = Aggregation::Majority;
        assert!(mr.validate().is_err());
        mr.repetitions = 3;
        assert!(mr.validate().is_ok());
        mr.transform_pipeline.clear();
        assert!(matches!(mr.validate(), Err(ModelError::EmptyPipeline { .. })));
    }

    #[test]
    fn verdict_invariants() {
        let mut v = Verdict::pass("p::m".into(), "m".into(), Some(1.0), String::new());
        assert!(v.validate().is_ok());
        v.annotation = Annotation::TruePositive;
        assert!(v.validate().is_err());

        let mut inc = Verdict::inconclusive(
            "p::m".into(),
            "m".into(),
            InconclusiveReason::TransformInapplicable,
            String::new(),
        );
        assert!(inc.validate().is_ok());
        inc.inconclusive_reason = None;
        assert!(inc.validate().is_err());
    }
}

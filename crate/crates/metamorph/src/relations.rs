//! Output-relation evaluation: comparators, relation kinds, and verdict
//! production. This is the deciding side of a metamorphic relation: it
//! judges whether the follow-up output stands in the expected relation
//! to the source output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{InconclusiveReason, Verdict};
use crate::process;
use crate::transforms::is_strippable;

/// How two output strings are scored for similarity.
///
/// The lexical kinds are computed in-process. `embedding-endpoint`
/// delegates to an external embedding service via the adapters module;
/// the engine supplies its score through [`EvalContext`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparatorKind {
    Exact,
    NormalizedExact,
    TokenJaccard,
    TfCosine,
    EmbeddingEndpoint,
}

impl ComparatorKind {
    pub const ALL: [ComparatorKind; 5] = [
        ComparatorKind::Exact,
        ComparatorKind::NormalizedExact,
        ComparatorKind::TokenJaccard,
        ComparatorKind::TfCosine,
        ComparatorKind::EmbeddingEndpoint,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ComparatorKind::Exact => "exact",
            ComparatorKind::NormalizedExact => "normalized-exact",
            ComparatorKind::TokenJaccard => "token-jaccard",
            ComparatorKind::TfCosine => "tf-cosine",
            ComparatorKind::EmbeddingEndpoint => "embedding-endpoint",
        }
    }

    pub fn parse(tag: &str) -> Result<ComparatorKind, RelationError> {
        let tag = tag.replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or(RelationError::UnknownComparator { tag })
    }
}

impl fmt::Display for ComparatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl Serialize for ComparatorKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for ComparatorKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        ComparatorKind::parse(&tag).map_err(serde::de::Error::custom)
    }
}

/// A comparator plus its decision boundaries. Scores at or above
/// `threshold` pass; scores below `threshold - uncertainty_band` violate;
/// scores in between are inconclusive rather than silently counted as
/// violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSpec {
    pub kind: ComparatorKind,
    pub threshold: f64,
    pub uncertainty_band: f64,
}

impl ComparatorSpec {
    pub fn new(kind: ComparatorKind, threshold: f64, uncertainty_band: f64) -> ComparatorSpec {
        ComparatorSpec { kind, threshold, uncertainty_band }
    }

    pub fn validate(&self) -> Result<(), RelationError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(RelationError::InvalidThreshold { value: self.threshold });
        }
        if !(0.0..=self.threshold).contains(&self.uncertainty_band) {
            return Err(RelationError::InvalidBand {
                band: self.uncertainty_band,
                threshold: self.threshold,
            });
        }
        Ok(())
    }
}

/// The expected relation between source and follow-up outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RelationKind {
    /// Outputs must be similar under the comparator.
    Equivalence,
    /// Outputs carry labels (via `label_lexicon`) and the follow-up label
    /// must equal `label_map` applied to the source label.
    Flip {
        label_map: BTreeMap<String, String>,
        label_lexicon: BTreeMap<String, String>,
    },
    /// Each output is handed to an external command; the relation holds
    /// when both commands exit with the same status.
    ExternalCheck { command: String },
}

impl RelationKind {
    pub fn tag(&self) -> &'static str {
        match self {
            RelationKind::Equivalence => "equivalence",
            RelationKind::Flip { .. } => "flip",
            RelationKind::ExternalCheck { .. } => "external-check",
        }
    }

    /// Checks the structural invariants: the flip map is an involution
    /// that covers every lexicon label, lexicon surface forms are
    /// lowercase, and the external command names its output placeholder.
    pub fn validate(&self) -> Result<(), RelationError> {
        match self {
            RelationKind::Equivalence => Ok(()),
            RelationKind::Flip { label_map, label_lexicon } => {
                if label_lexicon.is_empty() {
                    return Err(RelationError::EmptyLexicon);
                }
                for surface in label_lexicon.keys() {
                    if surface.chars().any(char::is_uppercase) {
                        return Err(RelationError::SurfaceFormNotLowercase {
                            surface: surface.clone(),
                        });
                    }
                }
                for (from, to) in label_map {
                    if label_map.get(to) != Some(from) {
                        return Err(RelationError::MapNotInvolution {
                            from: from.clone(),
                            to: to.clone(),
                        });
                    }
                }
                for label in label_lexicon.values() {
                    if !label_map.contains_key(label) {
                        return Err(RelationError::LabelNotMapped { label: label.clone() });
                    }
                }
                Ok(())
            }
            RelationKind::ExternalCheck { command } => {
                if !command.contains("{output_file}") {
                    return Err(RelationError::BadCommandTemplate { command: command.clone() });
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("unknown comparator kind {tag:?}")]
    UnknownComparator { tag: String },
    #[error("threshold {value} outside [0, 1]")]
    InvalidThreshold { value: f64 },
    #[error("uncertainty band {band} outside [0, threshold {threshold}]")]
    InvalidBand { band: f64, threshold: f64 },
    #[error("flip relation requires a non-empty label lexicon")]
    EmptyLexicon,
    #[error("lexicon surface form {surface:?} must be lowercase")]
    SurfaceFormNotLowercase { surface: String },
    #[error("flip map is not an involution: {from} -> {to} lacks the inverse entry")]
    MapNotInvolution { from: String, to: String },
    #[error("lexicon label {label:?} missing from the flip map")]
    LabelNotMapped { label: String },
    #[error("external-check command must contain {{output_file}}: {command:?}")]
    BadCommandTemplate { command: String },
}

/// Normalization behind the `normalized-exact` comparator: Unicode NFC,
/// case-fold, strip leading and trailing punctuation or whitespace, then
/// collapse internal whitespace runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    use unicode_normalization::UnicodeNormalization;
    let folded: String = text.nfc().collect::<String>().to_lowercase();
    let trimmed = folded.trim_matches(|c: char| c.is_whitespace() || is_strippable(c));
    let mut out = String::with_capacity(trimmed.len());
    let mut in_space = false;
    for c in trimmed.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

fn fold_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Scores two strings in [0, 1] under a lexical comparator kind.
///
/// # Panics
///
/// Panics for `embedding-endpoint`, whose score comes from the adapters
/// module, not from lexical comparison.
pub fn similarity(a: &str, b: &str, kind: ComparatorKind) -> f64 {
    match kind {
        ComparatorKind::Exact => {
            if a == b {
                1.0
            } else {
                0.0
            }
        }
        ComparatorKind::NormalizedExact => {
            if normalize_text(a) == normalize_text(b) {
                1.0
            } else {
                0.0
            }
        }
        ComparatorKind::TokenJaccard => {
            let sa: BTreeSet<String> = fold_tokens(a).into_iter().collect();
            let sb: BTreeSet<String> = fold_tokens(b).into_iter().collect();
            if sa.is_empty() && sb.is_empty() {
                return 1.0;
            }
            let overlap = sa.intersection(&sb).count() as f64;
            let union = sa.union(&sb).count() as f64;
            overlap / union
        }
        ComparatorKind::TfCosine => {
            let count = |text: &str| {
                let mut tf: BTreeMap<String, f64> = BTreeMap::new();
                for token in fold_tokens(text) {
                    *tf.entry(token).or_insert(0.0) += 1.0;
                }
                tf
            };
            let (ta, tb) = (count(a), count(b));
            // Identical term vectors score exactly 1.0; the float path
            // below can round a self-comparison to 0.999….
            if ta == tb {
                return 1.0;
            }
            let dot: f64 = ta
                .iter()
                .filter_map(|(token, fa)| tb.get(token).map(|fb| fa * fb))
                .sum();
            let norm = |tf: &BTreeMap<String, f64>| {
                tf.values().map(|f| f * f).sum::<f64>().sqrt()
            };
            let denom = norm(&ta) * norm(&tb);
            if denom == 0.0 {
                0.0
            } else {
                (dot / denom).clamp(0.0, 1.0)
            }
        }
        ComparatorKind::EmbeddingEndpoint => {
            panic!("embedding-endpoint similarity is computed via the adapters module")
        }
    }
}

/// Cosine similarity of two embedding vectors, clamped to [0, 1].
/// Zero-length or zero-norm vectors score 0.0 unless both are identical.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(0.0, 1.0)
    }
}

/// Finds the label whose surface form occurs earliest in the output after
/// case-folding and punctuation removal. Returns `None` (undecidable)
/// when no surface form occurs, or when two distinct labels tie for the
/// earliest position.
pub fn extract_label(output: &str, label_lexicon: &BTreeMap<String, String>) -> Option<String> {
    let normalized: String = output
        .to_lowercase()
        .chars()
        .filter(|c| !is_strippable(*c))
        .collect();
    let mut best: Option<(usize, &str)> = None;
    let mut tied = false;
    for (surface, label) in label_lexicon {
        let Some(position) = normalized.find(surface.as_str()) else {
            continue;
        };
        match best {
            None => best = Some((position, label)),
            Some((at, _)) if position < at => {
                best = Some((position, label));
                tied = false;
            }
            Some((at, chosen)) if position == at && chosen != label => tied = true,
            Some(_) => {}
        }
    }
    if tied {
        return None;
    }
    best.map(|(_, label)| label.to_string())
}

/// Per-evaluation context: identifiers for the produced verdict, the
/// external-check timeout, and the precomputed embedding score when the
/// comparator is `embedding-endpoint`.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub pair_id: String,
    pub mr_id: String,
    pub external_timeout: Duration,
    pub embedding_score: Option<f64>,
}

impl EvalContext {
    pub fn new(pair_id: impl Into<String>, mr_id: impl Into<String>) -> EvalContext {
        EvalContext {
            pair_id: pair_id.into(),
            mr_id: mr_id.into(),
            external_timeout: Duration::from_secs(10),
            embedding_score: None,
        }
    }

    pub fn with_external_timeout(mut self, timeout: Duration) -> Self {
        self.external_timeout = timeout;
        self
    }

    pub fn with_embedding_score(mut self, score: f64) -> Self {
        self.embedding_score = Some(score);
        self
    }
}

/// Evaluates one output pair under the relation, producing a verdict.
/// Failures of the evaluation machinery itself (an external check that
/// cannot run, a missing embedding score) surface as inconclusive
/// verdicts, never as panics or errors.
pub fn evaluate(
    relation: &RelationKind,
    comparator: &ComparatorSpec,
    source_output: &str,
    followup_output: &str,
    ctx: &EvalContext,
) -> Verdict {
    match relation {
        RelationKind::Equivalence => {
            let score = match comparator.kind {
                ComparatorKind::EmbeddingEndpoint => match ctx.embedding_score {
                    Some(score) => score,
                    None => {
                        return inconclusive(
                            ctx,
                            InconclusiveReason::SutError,
                            "embedding similarity unavailable".to_string(),
                        )
                    }
                },
                kind => similarity(source_output, followup_output, kind),
            };
            graded(comparator, score, ctx)
        }
        RelationKind::Flip { label_map, label_lexicon } => {
            let source_label = extract_label(source_output, label_lexicon);
            let followup_label = extract_label(followup_output, label_lexicon);
            match (source_label, followup_label) {
                (Some(source), Some(followup)) => match label_map.get(&source) {
                    Some(expected) if *expected == followup => Verdict::pass(
                        ctx.pair_id.clone(),
                        ctx.mr_id.clone(),
                        None,
                        format!("label {source} flipped to {followup}"),
                    ),
                    Some(expected) => Verdict::violation(
                        ctx.pair_id.clone(),
                        ctx.mr_id.clone(),
                        None,
                        format!(
                            "expected label {expected} after flip of {source}, observed {followup}"
                        ),
                    ),
                    None => inconclusive(
                        ctx,
                        InconclusiveReason::SutError,
                        format!("label {source} missing from the flip map"),
                    ),
                },
                (None, _) => inconclusive(
                    ctx,
                    InconclusiveReason::UncertaintyBand,
                    "source output label undecidable".to_string(),
                ),
                (_, None) => inconclusive(
                    ctx,
                    InconclusiveReason::UncertaintyBand,
                    "follow-up output label undecidable".to_string(),
                ),
            }
        }
        RelationKind::ExternalCheck { command } => {
            external_check(command, source_output, followup_output, ctx)
        }
    }
}

fn inconclusive(ctx: &EvalContext, reason: InconclusiveReason, detail: String) -> Verdict {
    Verdict::inconclusive(ctx.pair_id.clone(), ctx.mr_id.clone(), reason, detail)
}

fn graded(spec: &ComparatorSpec, score: f64, ctx: &EvalContext) -> Verdict {
    let detail = format!(
        "{} score {:.4} against threshold {:.4} (band {:.4})",
        spec.kind.tag(),
        score,
        spec.threshold,
        spec.uncertainty_band
    );
    if score >= spec.threshold {
        Verdict::pass(ctx.pair_id.clone(), ctx.mr_id.clone(), Some(score), detail)
    } else if score < spec.threshold - spec.uncertainty_band {
        Verdict::violation(ctx.pair_id.clone(), ctx.mr_id.clone(), Some(score), detail)
    } else {
        let mut verdict = inconclusive(ctx, InconclusiveReason::UncertaintyBand, detail);
        verdict.score = Some(score);
        verdict
    }
}

fn external_check(
    command: &str,
    source_output: &str,
    followup_output: &str,
    ctx: &EvalContext,
) -> Verdict {
    let run = |output: &str| -> Result<process::Completed, String> {
        let mut file = tempfile::NamedTempFile::new().map_err(|e| format!("temp file: {e}"))?;
        file.write_all(output.as_bytes()).map_err(|e| format!("temp file: {e}"))?;
        file.flush().map_err(|e| format!("temp file: {e}"))?;
        let path = file.path().to_string_lossy().into_owned();
        let argv = process::split_command(command, "{output_file}", &path);
        process::run_with_timeout(&argv, None, ctx.external_timeout)
            .map_err(|e| format!("failed to start: {e}"))
    };
    let (source_run, followup_run) = (run(source_output), run(followup_output));
    let (source_run, followup_run) = match (source_run, followup_run) {
        (Ok(s), Ok(f)) => (s, f),
        (Err(e), _) | (_, Err(e)) => {
            return inconclusive(
                ctx,
                InconclusiveReason::SutError,
                format!("external check could not run: {e}"),
            )
        }
    };
    if source_run.timed_out || followup_run.timed_out {
        return inconclusive(
            ctx,
            InconclusiveReason::SutError,
            format!("external check timed out after {}ms", ctx.external_timeout.as_millis()),
        );
    }
    let show = |code: Option<i32>| code.map_or("signal".to_string(), |c| c.to_string());
    let mut detail = format!(
        "exit statuses {}/{}",
        show(source_run.code),
        show(followup_run.code)
    );
    for (tag, run) in [("source", &source_run), ("follow-up", &followup_run)] {
        let chatter = format!("{} {}", run.stdout.trim(), run.stderr.trim());
        let chatter = chatter.trim();
        if !chatter.is_empty() {
            let excerpt: String = chatter.chars().take(160).map(|c| {
                if c == '\n' { ' ' } else { c }
            }).collect();
            detail.push_str(&format!("; {tag} check: {excerpt}"));
        }
    }
    match (source_run.code, followup_run.code) {
        (None, None) => inconclusive(
            ctx,
            InconclusiveReason::SutError,
            format!("{detail}; both checks killed by signal"),
        ),
        (a, b) if a == b => {
            Verdict::pass(ctx.pair_id.clone(), ctx.mr_id.clone(), None, detail)
        }
        _ => Verdict::violation(ctx.pair_id.clone(), ctx.mr_id.clone(), None, detail),
    }
}

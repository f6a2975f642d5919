//! Deterministic, seed-reproducible input transformations: the input
//! relation side of each metamorphic relation.
//!
//! All transforms are rule-based and self-contained. The synonym lexicon
//! and protected-word list ship as data files embedded at build time, so a
//! given (pipeline, input, seed) triple yields byte-identical output on
//! every platform. A seed is plumbed through every pipeline even though
//! the current rules never draw randomness, so stochastic variants can
//! be added without changing the provenance format.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{ModelError, SourceInput};

/// Embedded synonym lexicon, one `word<TAB>synonym` per line.
const SYNONYMS_TSV: &str = include_str!("../data/synonyms.tsv");
/// Embedded protected-word list, one entry per line, `#` comments.
const PROTECTED_TXT: &str = include_str!("../data/protected_words.txt");

/// The closed transform registry. Step names outside this set are
/// configuration errors.
pub const REGISTRY: &[&str] = &[
    "synonym-paraphrase",
    "misspell",
    "case-perturb",
    "punctuation-strip",
    "append-distractor",
    "swap-entities",
    "negate-numeric",
];

/// Normalizes a transform name: `_` is accepted as an alias for `-`.
pub fn canonical_name(name: &str) -> String {
    name.replace('_', "-")
}

/// One step of a transform pipeline.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TransformStep {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, String>,
}

impl TransformStep {
    pub fn new(name: impl Into<String>) -> TransformStep {
        TransformStep { name: canonical_name(&name.into()), parameters: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    /// Validates the step name against the registry and its parameters
    /// against the per-name schema. Run at load time, not apply time.
    pub fn validate(&self) -> Result<(), TransformError> {
        let name = canonical_name(&self.name);
        if !REGISTRY.contains(&name.as_str()) {
            return Err(TransformError::UnknownTransform { name: self.name.clone() });
        }
        let allowed: &[&str] = match name.as_str() {
            "synonym-paraphrase" => &["max-words"],
            "case-perturb" => &["mode"],
            "append-distractor" => &["distractor-text"],
            _ => &[],
        };
        for key in self.parameters.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(TransformError::InvalidParameter {
                    transform: name.clone(),
                    reason: format!("unknown parameter {key:?}"),
                });
            }
        }
        if let Some(raw) = self.parameters.get("max-words") {
            let parsed: Result<usize, _> = raw.parse();
            if !matches!(parsed, Ok(n) if n >= 1) {
                return Err(TransformError::InvalidParameter {
                    transform: name,
                    reason: format!("max-words must be a positive integer, got {raw:?}"),
                });
            }
        } else if let Some(mode) = self.parameters.get("mode") {
            if !["invert", "upper", "lower"].contains(&mode.as_str()) {
                return Err(TransformError::InvalidParameter {
                    transform: name,
                    reason: format!("mode must be invert, upper, or lower, got {mode:?}"),
                });
            }
        } else if name == "append-distractor" {
            match self.parameters.get("distractor-text") {
                Some(text) if !text.is_empty() => {}
                Some(_) => {
                    return Err(TransformError::InvalidParameter {
                        transform: name,
                        reason: "distractor-text must be non-empty".to_string(),
                    })
                }
                None => {
                    return Err(TransformError::InvalidParameter {
                        transform: name,
                        reason: "distractor-text is required".to_string(),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Result of applying a transform: either new text or a reason the
/// transform does not apply to this input.
///
/// Inapplicability is data, not an error: a transform that cannot hold its
/// input relation on some input skips that input rather than forcing a
/// meaning-shifting edit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformOutcome {
    Applied(String),
    Inapplicable(String),
}

impl TransformOutcome {
    pub fn applied(&self) -> Option<&str> {
        match self {
            TransformOutcome::Applied(text) => Some(text),
            TransformOutcome::Inapplicable(_) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("unknown transform {name:?}")]
    UnknownTransform { name: String },
    #[error("transform {transform}: {reason}")]
    InvalidParameter { transform: String, reason: String },
    #[error("swap-entities: {reason}")]
    InvalidSpans { reason: String },
    #[error("{0}")]
    Input(#[from] ModelError),
}

/// The synonym lexicon and protected-word list a pipeline runs against.
#[derive(Debug, Clone)]
pub struct Lexicons {
    synonyms: BTreeMap<String, String>,
    protected: BTreeSet<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons::from_data(SYNONYMS_TSV, PROTECTED_TXT)
    }
}

impl Lexicons {
    /// Parses lexicon data: synonym lines are `word<TAB>synonym`, the
    /// protected list is one word per line; `#` starts a comment line.
    pub fn from_data(synonyms_tsv: &str, protected_txt: &str) -> Lexicons {
        let mut synonyms = BTreeMap::new();
        for line in synonyms_tsv.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((word, synonym)) = line.split_once('\t') {
                synonyms.insert(word.trim().to_string(), synonym.trim().to_string());
            }
        }
        let protected = protected_txt
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Lexicons { synonyms, protected }
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    /// Inverse synonym map (synonym → word), used by mocks that need to
    /// recognize paraphrased inputs.
    pub fn inverse_synonyms(&self) -> BTreeMap<String, String> {
        self.synonyms.iter().map(|(w, s)| (s.clone(), w.clone())).collect()
    }

    /// A word is protected when it is on the protected list (lowercased
    /// lookup) or starts with an uppercase letter, the named-entity rule.
    pub fn is_protected(&self, word: &str) -> bool {
        if word.chars().next().is_some_and(char::is_uppercase) {
            return true;
        }
        self.protected.contains(&word.to_lowercase())
    }
}

/// A token split into its leading punctuation, core word, and trailing
/// punctuation. Transforms operate on the core and reattach the rest.
fn split_core(token: &str) -> (&str, &str, &str) {
    let start = token
        .char_indices()
        .find(|(_, c)| !c.is_ascii_punctuation())
        .map_or(token.len(), |(i, _)| i);
    let rest = &token[start..];
    let end = rest
        .char_indices()
        .rev()
        .find(|(_, c)| !c.is_ascii_punctuation())
        .map_or(0, |(i, c)| i + c.len_utf8());
    (&token[..start], &rest[..end], &rest[end..])
}

/// Splits text into alternating whitespace and token segments so a
/// transform can rewrite tokens while preserving whitespace structure.
fn segments(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let is_space = rest.chars().next().unwrap().is_whitespace();
        let end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace() != is_space)
            .map_or(rest.len(), |(i, _)| i);
        out.push((is_space, &rest[..end]));
        rest = &rest[end..];
    }
    out
}

/// Deterministic misspelling: picks the longest word of length ≥ 4 that is
/// not protected (ties broken by first occurrence) and swaps its two middle
/// characters, indices ⌊(n−1)/2⌋ and ⌊(n−1)/2⌋+1 of the core word.
pub fn misspell(text: &str, lexicons: &Lexicons) -> TransformOutcome {
    let segs = segments(text);
    let mut best: Option<(usize, usize)> = None; // (segment index, core char count)
    for (i, (is_space, token)) in segs.iter().enumerate() {
        if *is_space {
            continue;
        }
        let (_, core, _) = split_core(token);
        let len = core.chars().count();
        if len >= 4 && !lexicons.is_protected(core) && best.is_none_or(|(_, l)| len > l) {
            best = Some((i, len));
        }
    }
    let Some((target, len)) = best else {
        return TransformOutcome::Inapplicable("no eligible word of length >= 4".to_string());
    };
    let swap_at = (len - 1) / 2;
    let mut out = String::with_capacity(text.len());
    for (i, (_, token)) in segs.iter().enumerate() {
        if i != target {
            out.push_str(token);
            continue;
        }
        let (prefix, core, suffix) = split_core(token);
        let mut chars: Vec<char> = core.chars().collect();
        chars.swap(swap_at, swap_at + 1);
        out.push_str(prefix);
        out.extend(chars);
        out.push_str(suffix);
    }
    if out == text {
        return TransformOutcome::Inapplicable(
            "selected word's middle characters are identical".to_string(),
        );
    }
    TransformOutcome::Applied(out)
}

/// Exchanges the two span substrings; all other bytes are preserved.
/// Spans are byte ranges that must be in-bounds, on character boundaries,
/// non-overlapping, with `a` starting before `b`.
pub fn swap_entities(
    text: &str,
    span_a: (usize, usize),
    span_b: (usize, usize),
) -> Result<TransformOutcome, TransformError> {
    let ((a0, a1), (b0, b1)) = (span_a, span_b);
    let bounds_ok = |&(s, e): &(usize, usize)| {
        s < e && e <= text.len() && text.is_char_boundary(s) && text.is_char_boundary(e)
    };
    if !bounds_ok(&span_a) || !bounds_ok(&span_b) {
        return Err(TransformError::InvalidSpans {
            reason: format!("spans {a0}..{a1}, {b0}..{b1} out of bounds for text"),
        });
    }
    if a0 >= b0 {
        return Err(TransformError::InvalidSpans {
            reason: "span-a must start before span-b".to_string(),
        });
    }
    if b0 < a1 {
        return Err(TransformError::InvalidSpans {
            reason: format!("spans {a0}..{a1} and {b0}..{b1} overlap"),
        });
    }
    let (entity_a, entity_b) = (&text[a0..a1], &text[b0..b1]);
    if entity_a == entity_b {
        return Ok(TransformOutcome::Inapplicable("entities identical".to_string()));
    }
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..a0]);
    out.push_str(entity_b);
    out.push_str(&text[a1..b0]);
    out.push_str(entity_a);
    out.push_str(&text[b1..]);
    Ok(TransformOutcome::Applied(out))
}

/// Appends `distractor` after a single space. Always applicable; an empty
/// distractor is a configuration error, not an inapplicability.
pub fn append_distractor(
    text: &str,
    distractor: &str,
) -> Result<TransformOutcome, TransformError> {
    if distractor.is_empty() {
        return Err(TransformError::InvalidParameter {
            transform: "append-distractor".to_string(),
            reason: "distractor-text must be non-empty".to_string(),
        });
    }
    Ok(TransformOutcome::Applied(format!("{text} {distractor}")))
}

/// Produces the numeral of the additive inverse in canonical form: no
/// leading `+`, and zero is never signed. `"0"` is the fixed point, the
/// one documented case where an applied transform returns its input.
pub fn negate_numeric(text: &str) -> TransformOutcome {
    let trimmed = text.trim();
    let (negative, digits) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let numeral_ok = match digits.split_once('.') {
        Some((int, frac)) => {
            !frac.is_empty()
                && int.chars().all(|c| c.is_ascii_digit())
                && frac.chars().all(|c| c.is_ascii_digit())
                && !(int.is_empty() && frac.is_empty())
        }
        None => !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()),
    };
    if !numeral_ok {
        return TransformOutcome::Inapplicable(format!("not a decimal numeral: {text:?}"));
    }
    let is_zero = digits.chars().all(|c| c == '0' || c == '.');
    if is_zero {
        return TransformOutcome::Applied(digits.to_string());
    }
    if negative {
        TransformOutcome::Applied(digits.to_string())
    } else {
        TransformOutcome::Applied(format!("-{digits}"))
    }
}

/// Case perturbation. Modes: `invert` (default) flips the case of every
/// cased character, `upper` and `lower` fold the whole text. Caseless text
/// is inapplicable, never an identity application.
pub fn case_perturb(text: &str, mode: &str) -> TransformOutcome {
    let out: String = match mode {
        "upper" => text.to_uppercase(),
        "lower" => text.to_lowercase(),
        _ => text
            .chars()
            .flat_map(|c| {
                if c.is_uppercase() {
                    c.to_lowercase().collect::<Vec<_>>()
                } else if c.is_lowercase() {
                    c.to_uppercase().collect()
                } else {
                    vec![c]
                }
            })
            .collect(),
    };
    if out == text {
        TransformOutcome::Inapplicable("text has no case to perturb".to_string())
    } else {
        TransformOutcome::Applied(out)
    }
}

/// Characters removed by `punctuation-strip` (ASCII punctuation plus the
/// common typographic marks). Label extraction and text normalization in
/// the relations module strip the same set.
pub(crate) fn is_strippable(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '¡' | '¿' | '«' | '»' | '“' | '”' | '‘' | '’' | '…' | '—' | '–' | '„' | '‚' | '·'
        )
}

/// Removes punctuation characters. Inapplicable when the text has none,
/// or when nothing but punctuation and whitespace would remain.
pub fn punctuation_strip(text: &str) -> TransformOutcome {
    let out: String = text.chars().filter(|c| !is_strippable(*c)).collect();
    if out == text {
        TransformOutcome::Inapplicable("no punctuation to strip".to_string())
    } else if out.trim().is_empty() {
        TransformOutcome::Inapplicable("text is punctuation only".to_string())
    } else {
        TransformOutcome::Applied(out)
    }
}

/// Replaces up to `max_words` lexicon words with their synonyms, scanning
/// left to right. Protected and capitalized words are never substituted.
pub fn synonym_paraphrase(
    text: &str,
    max_words: usize,
    lexicons: &Lexicons,
) -> TransformOutcome {
    let mut replaced = 0usize;
    let mut out = String::with_capacity(text.len());
    for (is_space, token) in segments(text) {
        if is_space || replaced >= max_words {
            out.push_str(token);
            continue;
        }
        let (prefix, core, suffix) = split_core(token);
        match lexicons.synonyms.get(core) {
            Some(synonym) if !lexicons.is_protected(core) => {
                out.push_str(prefix);
                out.push_str(synonym);
                out.push_str(suffix);
                replaced += 1;
            }
            _ => out.push_str(token),
        }
    }
    if replaced == 0 {
        TransformOutcome::Inapplicable("no lexicon word to paraphrase".to_string())
    } else {
        TransformOutcome::Applied(out)
    }
}

/// Applies a pipeline of steps in order. If any step reports inapplicable,
/// the whole pipeline is inapplicable. Identical (pipeline, input, seed)
/// triples yield byte-identical outputs.
///
/// The seed is accepted for provenance compatibility; current rules are
/// deterministic without it.
pub fn apply_pipeline(
    pipeline: &[TransformStep],
    input: &SourceInput,
    lexicons: &Lexicons,
    _seed: u64,
) -> Result<TransformOutcome, TransformError> {
    if pipeline.is_empty() {
        return Err(TransformError::InvalidParameter {
            transform: "pipeline".to_string(),
            reason: "transform pipeline must be non-empty".to_string(),
        });
    }
    let mut text = input.text.clone();
    for (position, step) in pipeline.iter().enumerate() {
        step.validate()?;
        let name = canonical_name(&step.name);
        let outcome = match name.as_str() {
            "misspell" => misspell(&text, lexicons),
            "case-perturb" => {
                let mode = step.parameters.get("mode").map_or("invert", String::as_str);
                case_perturb(&text, mode)
            }
            "punctuation-strip" => punctuation_strip(&text),
            "append-distractor" => {
                let distractor = step
                    .parameters
                    .get("distractor-text")
                    .map_or("", String::as_str);
                append_distractor(&text, distractor)?
            }
            "negate-numeric" => negate_numeric(&text),
            "synonym-paraphrase" => {
                let max_words = step
                    .parameters
                    .get("max-words")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(usize::MAX);
                synonym_paraphrase(&text, max_words, lexicons)
            }
            "swap-entities" => {
                // Entity spans index the original text; a prior step would
                // have invalidated them.
                if position != 0 {
                    return Err(TransformError::InvalidParameter {
                        transform: name,
                        reason: "swap-entities must be the first pipeline step".to_string(),
                    });
                }
                match input.entity_spans()? {
                    [Some(a), Some(b)] => swap_entities(&text, a, b)?,
                    _ => TransformOutcome::Inapplicable("requires 2 entity spans".to_string()),
                }
            }
            other => return Err(TransformError::UnknownTransform { name: other.to_string() }),
        };
        match outcome {
            TransformOutcome::Applied(next) => text = next,
            TransformOutcome::Inapplicable(note) => {
                return Ok(TransformOutcome::Inapplicable(format!("{name}: {note}")));
            }
        }
    }
    Ok(TransformOutcome::Applied(text))
}

//! Config file loading and flag merging. A run is configured by an
//! optional TOML file plus command-line flags; whenever both set the
//! same knob, the flag wins. The merged result is echoed into the run
//! directory, and its semantic fields are hashed into the report so
//! `diff` can refuse to compare apples to oranges.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use metamorph::adapters::{SutKind, SutSpec};
use metamorph::canon::{canonical_json, sha256_hex};
use metamorph::model::{MetamorphicRelation, SourceInput};
use metamorph::mrspec;

/// Flags shared by the config-driven subcommands. Every field mirrors a
/// config-file key; a present flag overrides the file.
#[derive(clap::Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML config file with suite, relations, and SUT settings
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Source-input JSONL file, one input object per line
    #[arg(long, value_name = "PATH")]
    pub suite: Option<PathBuf>,
    /// Relation declarations (.mrs)
    #[arg(long, value_name = "PATH")]
    pub relations: Option<PathBuf>,
    /// Response cache directory; caching is off when unset
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Run store directory
    #[arg(long, value_name = "DIR")]
    pub store_dir: Option<PathBuf>,
    /// Derivation seed for pair generation
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread budget for SUT calls
    #[arg(long)]
    pub workers: Option<usize>,
    /// Forbid network traffic and answer from the cache alone
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub offline: Option<bool>,
    /// Failure-rate delta at or above which drift is flagged
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// SUT kind: http-chat, subprocess, mock-scripted, mock-faulty, builtin-function
    #[arg(long, value_name = "KIND")]
    pub sut_kind: Option<String>,
    /// SUT endpoint URL, command line, answer-table path, or builtin name
    #[arg(long, value_name = "TARGET")]
    pub sut_target: Option<String>,
    /// Model identifier sent to HTTP backends and recorded in reports
    #[arg(long)]
    pub model_id: Option<String>,
}

/// The config file as written by the user; all keys optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub suite: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub offline: Option<bool>,
    pub epsilon: Option<f64>,
    pub external_timeout_ms: Option<u64>,
    pub sut: Option<SutSpec>,
    pub embedding_sut: Option<SutSpec>,
    #[serde(default)]
    pub templates: BTreeMap<String, String>,
}

/// Fully merged configuration with defaults applied.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResolvedConfig {
    pub suite: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub store_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub offline: bool,
    pub epsilon: f64,
    pub external_timeout_ms: u64,
    pub sut: Option<SutSpec>,
    pub embedding_sut: Option<SutSpec>,
    pub templates: BTreeMap<String, String>,
}

impl ResolvedConfig {
    /// Loads the config file named by the flags (if any) and lays the
    /// remaining flags over it.
    pub fn resolve(flags: &Overrides) -> Result<ResolvedConfig, String> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| format!("config {}: {e}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let sut = merge_sut(file.sut, flags)?;
        Ok(ResolvedConfig {
            suite: flags.suite.clone().or(file.suite),
            relations: flags.relations.clone().or(file.relations),
            cache_dir: flags.cache_dir.clone().or(file.cache_dir),
            store_dir: flags
                .store_dir
                .clone()
                .or(file.store_dir)
                .unwrap_or_else(|| PathBuf::from("runs")),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            workers: flags.workers.or(file.workers).unwrap_or(4),
            offline: flags.offline.or(file.offline).unwrap_or(false),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(0.05),
            external_timeout_ms: file.external_timeout_ms.unwrap_or(10_000),
            sut,
            embedding_sut: file.embedding_sut,
            templates: file.templates,
        })
    }

    pub fn require_suite(&self) -> Result<&Path, String> {
        self.suite
            .as_deref()
            .ok_or_else(|| "no suite configured; pass --suite or set it in the config".into())
    }

    pub fn require_relations(&self) -> Result<&Path, String> {
        self.relations
            .as_deref()
            .ok_or_else(|| {
                "no relations configured; pass --relations or set it in the config".into()
            })
    }

    pub fn require_sut(&self) -> Result<&SutSpec, String> {
        self.sut.as_ref().ok_or_else(|| {
            "no SUT configured; add a [sut] block or pass --sut-kind and --sut-target".into()
        })
    }

    /// Hash over the fields that determine verdicts: the SUT contract,
    /// the seed, the templates, and digests of the suite and relation
    /// content. Paths, worker counts, offline mode, and output options
    /// are deliberately excluded: they change where and how fast results
    /// appear, not what they are.
    pub fn config_hash(
        &self,
        suite: &[SourceInput],
        relations: &[MetamorphicRelation],
    ) -> String {
        #[derive(Serialize)]
        #[serde(rename_all = "kebab-case")]
        struct Semantic<'a> {
            sut: &'a Option<SutSpec>,
            embedding_sut: &'a Option<SutSpec>,
            seed: u64,
            external_timeout_ms: u64,
            templates: &'a BTreeMap<String, String>,
            suite_digest: String,
            relations_digest: String,
        }
        let semantic = Semantic {
            sut: &self.sut,
            embedding_sut: &self.embedding_sut,
            seed: self.seed,
            external_timeout_ms: self.external_timeout_ms,
            templates: &self.templates,
            suite_digest: sha256_hex(canonical_json(&suite.to_vec()).as_bytes()),
            relations_digest: sha256_hex(
                mrspec::serialize_relations(relations).as_bytes(),
            ),
        };
        sha256_hex(canonical_json(&semantic).as_bytes())
    }
}

fn merge_sut(file_sut: Option<SutSpec>, flags: &Overrides) -> Result<Option<SutSpec>, String> {
    let kind = flags.sut_kind.as_deref().map(parse_sut_kind).transpose()?;
    let mut sut = match (file_sut, kind, &flags.sut_target) {
        (Some(sut), _, _) => sut,
        (None, Some(kind), Some(target)) => SutSpec::new(kind, target.clone()),
        (None, None, None) => return Ok(None),
        (None, _, _) => {
            return Err(
                "configuring a SUT from flags needs both --sut-kind and --sut-target".into()
            )
        }
    };
    if let Some(kind) = kind {
        sut.kind = kind;
    }
    if let Some(target) = &flags.sut_target {
        sut.endpoint_or_command = target.clone();
    }
    if let Some(model_id) = &flags.model_id {
        sut.model_id = model_id.clone();
    }
    Ok(Some(sut))
}

fn parse_sut_kind(tag: &str) -> Result<SutKind, String> {
    let canonical = tag.trim().replace('_', "-");
    for kind in [
        SutKind::HttpChat,
        SutKind::Subprocess,
        SutKind::MockScripted,
        SutKind::MockFaulty,
        SutKind::BuiltinFunction,
    ] {
        if kind.tag() == canonical {
            return Ok(kind);
        }
    }
    Err(format!(
        "unknown SUT kind {tag:?}; expected http-chat, subprocess, mock-scripted, mock-faulty, or builtin-function"
    ))
}

/// Reads a suite file: JSON Lines, one `SourceInput` per line, blank
/// lines skipped.
pub fn load_suite(path: &Path) -> Result<Vec<SourceInput>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read suite {}: {e}", path.display()))?;
    let mut suite = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let input: SourceInput = serde_json::from_str(line)
            .map_err(|e| format!("suite {} line {}: {e}", path.display(), index + 1))?;
        suite.push(input);
    }
    if suite.is_empty() {
        return Err(format!("suite {} contains no inputs", path.display()));
    }
    Ok(suite)
}

/// Reads and validates a relation file, returning the executable
/// relations plus any warnings. Errors come back as rendered diagnostic
/// lines.
pub fn load_relations(path: &Path) -> Result<(Vec<MetamorphicRelation>, Vec<String>), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read relations {}: {e}", path.display()))?;
    let doc = mrspec::parse(&text).map_err(|diags| render_diags(path, &diags))?;
    let warnings = mrspec::validate(&doc)
        .iter()
        .filter(|d| d.severity == mrspec::Severity::Warning)
        .map(|d| format!("{}: {d}", path.display()))
        .collect();
    let relations = mrspec::to_relations(&doc).map_err(|diags| render_diags(path, &diags))?;
    Ok((relations, warnings))
}

fn render_diags(path: &Path, diags: &[mrspec::Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("{}: {d}", path.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

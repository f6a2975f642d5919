//! System-under-test access: an OpenAI-compatible HTTP client, a
//! subprocess adapter, built-in reference functions, and seeded mock
//! models, all behind one `query` interface with a content-addressed
//! record/replay cache.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{canonical_json, keyed_coin, keyed_hash64, sha256_hex};
use crate::process;
use crate::transforms::{is_strippable, Lexicons};

/// How the system under test is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SutKind {
    HttpChat,
    Subprocess,
    MockScripted,
    MockFaulty,
    BuiltinFunction,
}

impl SutKind {
    pub fn tag(self) -> &'static str {
        match self {
            SutKind::HttpChat => "http-chat",
            SutKind::Subprocess => "subprocess",
            SutKind::MockScripted => "mock-scripted",
            SutKind::MockFaulty => "mock-faulty",
            SutKind::BuiltinFunction => "builtin-function",
        }
    }
}

/// Deterministic fault injection for the faulty mock: `phrasing_sensitivity`
/// is the probability a perturbed input gets a divergent answer,
/// `nondeterminism` the probability any repetition diverges on its own.
/// Behavior is a pure function of (input text, repetition, `rng_seed`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MockFaultModel {
    pub phrasing_sensitivity: f64,
    #[serde(default)]
    pub nondeterminism: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl MockFaultModel {
    pub fn validate(&self) -> Result<(), SutError> {
        for (name, p) in [
            ("phrasing-sensitivity", self.phrasing_sensitivity),
            ("nondeterminism", self.nondeterminism),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SutError::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Connection and behavior description of a system under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SutSpec {
    pub kind: SutKind,
    /// URL for `http-chat`, command line for `subprocess`, answer-table
    /// path for the mocks, function name for `builtin-function`.
    pub endpoint_or_command: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<MockFaultModel>,
}

fn default_max_tokens() -> u32 {
    256
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    100
}

impl SutSpec {
    pub fn new(kind: SutKind, endpoint_or_command: impl Into<String>) -> SutSpec {
        SutSpec {
            kind,
            endpoint_or_command: endpoint_or_command.into(),
            model_id: "default".to_string(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            request_seed: Some(0),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
            auth_env: None,
            fault: None,
        }
    }

    pub fn validate(&self) -> Result<(), SutError> {
        if self.timeout_ms == 0 {
            return Err(SutError::Config("timeout must be positive".to_string()));
        }
        if self.retries > 10 {
            return Err(SutError::Config(format!("retries {} exceed the cap of 10", self.retries)));
        }
        match self.kind {
            SutKind::HttpChat => {
                if !self.endpoint_or_command.starts_with("http") {
                    return Err(SutError::Config(format!(
                        "http-chat endpoint must be a URL, got {:?}",
                        self.endpoint_or_command
                    )));
                }
            }
            SutKind::BuiltinFunction => {
                builtin_eval(&self.endpoint_or_command, "0")?;
            }
            SutKind::MockFaulty => match &self.fault {
                Some(fault) => fault.validate()?,
                None => {
                    return Err(SutError::Config(
                        "mock-faulty requires a fault model".to_string(),
                    ))
                }
            },
            SutKind::Subprocess | SutKind::MockScripted => {
                if self.endpoint_or_command.is_empty() {
                    return Err(SutError::Config(format!(
                        "{} requires a command or table path",
                        self.kind.tag()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One completed SUT call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub output: String,
    pub latency_ms: u64,
    pub cache_hit: bool,
}

#[derive(Debug, Error)]
pub enum SutError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed SUT response: {0}")]
    Malformed(String),
    #[error("subprocess failed: {0}")]
    Subprocess(String),
    #[error("SUT call timed out after {0}ms")]
    Timeout(u64),
    #[error("{0} unavailable offline with a cold cache")]
    Offline(&'static str),
    #[error("configuration: {0}")]
    Config(String),
    #[error("builtin function: {0}")]
    Builtin(String),
    #[error("cache i/o: {0}")]
    CacheIo(String),
}

/// Content address of one SUT call: a hash over model id, operation,
/// rendered prompt, request parameters, and repetition index. Stable
/// across processes and platforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn for_query(spec: &SutSpec, op: &str, prompt: &str, repetition: u32) -> CacheKey {
        let material = serde_json::json!({
            "model-id": spec.model_id,
            "op": op,
            "prompt": prompt,
            "params": {
                "temperature": spec.temperature,
                "max-tokens": spec.max_tokens,
                "request-seed": spec.request_seed,
            },
            "repetition": repetition,
        });
        CacheKey { digest: sha256_hex(canonical_json(&material).as_bytes()) }
    }
}

/// One cache file: the key, the request as sent, the response as
/// received, and when it was recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CacheEntry {
    pub key: String,
    pub request: serde_json::Value,
    pub response: serde_json::Value,
    pub created_at: String,
}

/// Append-only, content-addressed response cache: one JSON file per
/// entry under a two-hex-digit prefix directory, written via temp file
/// and atomic rename so concurrent writers need no locks.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Cache {
        Cache { root: root.into() }
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.digest[..2]).join(format!("{}.json", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let bytes = std::fs::read(self.entry_path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> Result<(), SutError> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry path has a parent");
        let io = |e: std::io::Error| SutError::CacheIo(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        let body = serde_json::to_string_pretty(entry)
            .map_err(|e| SutError::CacheIo(e.to_string()))?;
        tmp.write_all(body.as_bytes()).map_err(io)?;
        tmp.write_all(b"\n").map_err(io)?;
        tmp.persist(&path).map_err(|e| SutError::CacheIo(e.to_string()))?;
        Ok(())
    }
}

/// Sorts the characters of a token, the normalization that makes the
/// adjacent-swap misspelling invisible to the scripted mock.
fn sorted_chars(token: &str) -> String {
    let mut chars: Vec<char> = token.chars().collect();
    chars.sort_unstable();
    chars.into_iter().collect()
}

/// The invariance signature of a text: lowercase, drop punctuation,
/// tokenize, fold synonyms back to their base word, sort the characters
/// of each token. Paraphrase, misspelling, case, and punctuation variants
/// of a text share its signature; appending a distractor extends the
/// token list, leaving the original signature as a prefix.
pub fn invariance_signature(text: &str, inverse_sorted: &BTreeMap<String, String>) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !is_strippable(*c))
        .collect();
    cleaned
        .split_whitespace()
        .map(|token| {
            let sorted = sorted_chars(token);
            inverse_sorted.get(&sorted).cloned().unwrap_or(sorted)
        })
        .collect()
}

/// Builds the signature-space synonym map (sorted synonym → sorted base
/// word) used by [`invariance_signature`].
pub fn inverse_sorted_synonyms(lexicons: &Lexicons) -> BTreeMap<String, String> {
    lexicons
        .synonyms()
        .iter()
        .map(|(word, synonym)| (sorted_chars(synonym), sorted_chars(word)))
        .collect()
}

/// A lookup-table mock whose answers survive invariance transforms:
/// exact hits answer directly, misses fall back to the longest table
/// entry whose signature prefixes the query's signature.
#[derive(Debug, Clone)]
pub struct ScriptedMock {
    exact: BTreeMap<String, String>,
    signatures: Vec<(Vec<String>, String)>,
    inverse_sorted: BTreeMap<String, String>,
}

impl ScriptedMock {
    pub fn new(table: Vec<(String, String)>) -> ScriptedMock {
        let inverse_sorted = inverse_sorted_synonyms(&Lexicons::default());
        let exact = table.iter().cloned().collect();
        let signatures = table
            .iter()
            .map(|(input, answer)| {
                (invariance_signature(input, &inverse_sorted), answer.clone())
            })
            .collect();
        ScriptedMock { exact, signatures, inverse_sorted }
    }

    /// Parses an answer table: one `input<TAB>answer` per line, `#`
    /// comments and blank lines ignored.
    pub fn from_tsv(data: &str) -> Result<ScriptedMock, SutError> {
        let mut table = Vec::new();
        for (number, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((input, answer)) = line.split_once('\t') else {
                return Err(SutError::Config(format!(
                    "answer table line {}: expected input<TAB>answer",
                    number + 1
                )));
            };
            table.push((input.trim().to_string(), answer.trim().to_string()));
        }
        if table.is_empty() {
            return Err(SutError::Config("answer table is empty".to_string()));
        }
        Ok(ScriptedMock::new(table))
    }

    /// True when the prompt is a verbatim table entry.
    pub fn is_verbatim(&self, prompt: &str) -> bool {
        self.exact.contains_key(prompt)
    }

    pub fn answer(&self, prompt: &str) -> String {
        if let Some(answer) = self.exact.get(prompt) {
            return answer.clone();
        }
        let signature = invariance_signature(prompt, &self.inverse_sorted);
        let mut best: Option<(usize, &str)> = None;
        for (entry_sig, answer) in &self.signatures {
            if entry_sig.len() <= signature.len()
                && entry_sig[..] == signature[..entry_sig.len()]
                && best.is_none_or(|(len, _)| entry_sig.len() > len)
            {
                best = Some((entry_sig.len(), answer));
            }
        }
        match best {
            Some((_, answer)) => answer.to_string(),
            None => {
                let digest = keyed_hash64(0, &[b"unknown", join_sig(&signature).as_bytes()]);
                format!("unknown:{digest:016x}")
            }
        }
    }
}

fn join_sig(signature: &[String]) -> String {
    signature.join(" ")
}

/// Sentiment word lists for the builtin rule-based mock.
const POSITIVE_WORDS: &[&str] = &[
    "amazing", "brilliant", "delightful", "enjoyable", "excellent", "fantastic", "fine",
    "good", "great", "happy", "love", "loved", "pleasant", "superb", "wonderful",
];
const NEGATIVE_WORDS: &[&str] = &[
    "awful", "bad", "boring", "disappointing", "dreadful", "dull", "hate", "hated",
    "horrible", "mediocre", "poor", "sad", "terrible", "unpleasant", "weak",
];
const NEGATORS: &[&str] = &["not", "no", "never"];

/// Names accepted by the `builtin-function` SUT kind.
pub const BUILTINS: &[&str] = &["square", "square-mutant", "sentiment", "sentiment-no-negation"];

/// Evaluates a builtin reference function on one input.
///
/// `square` returns the decimal numeral of the input squared, with exact
/// integer arithmetic on integer inputs. `square-mutant` computes x·|x|,
/// a deliberate fault that only differs on negative inputs. The two
/// sentiment variants classify by polarity word counts; the mutant
/// ignores negators.
pub fn builtin_eval(name: &str, input: &str) -> Result<String, SutError> {
    match name {
        "square" => square(input, false),
        "square-mutant" => square(input, true),
        "sentiment" => Ok(sentiment(input, true)),
        "sentiment-no-negation" => Ok(sentiment(input, false)),
        other => Err(SutError::Config(format!(
            "unknown builtin {other:?}; expected one of {BUILTINS:?}"
        ))),
    }
}

fn square(input: &str, mutant: bool) -> Result<String, SutError> {
    let text = input.trim();
    if let Ok(x) = text.parse::<i128>() {
        let overflow = || SutError::Builtin(format!("square of {x} overflows"));
        let other = if mutant { x.checked_abs().ok_or_else(overflow)? } else { x };
        let value = x.checked_mul(other).ok_or_else(overflow)?;
        return Ok(value.to_string());
    }
    let x: f64 = text
        .parse()
        .map_err(|_| SutError::Builtin(format!("input is not a numeral: {input:?}")))?;
    let value = if mutant { x * x.abs() } else { x * x };
    Ok(format!("{value}"))
}

fn sentiment(input: &str, honor_negation: bool) -> String {
    let cleaned: String = input
        .to_lowercase()
        .chars()
        .filter(|c| !is_strippable(*c))
        .collect();
    let mut score = 0i64;
    let mut negators = 0u32;
    for token in cleaned.split_whitespace() {
        if POSITIVE_WORDS.contains(&token) {
            score += 1;
        } else if NEGATIVE_WORDS.contains(&token) {
            score -= 1;
        } else if NEGATORS.contains(&token) {
            negators += 1;
        }
    }
    if honor_negation && negators % 2 == 1 {
        score = -score;
    }
    match score.cmp(&0) {
        std::cmp::Ordering::Greater => "positive".to_string(),
        std::cmp::Ordering::Less => "negative".to_string(),
        std::cmp::Ordering::Equal => "neutral".to_string(),
    }
}

/// A live connection to one system under test, with optional cache.
pub struct Adapter {
    spec: SutSpec,
    cache: Option<Cache>,
    offline: bool,
    mock: Option<ScriptedMock>,
    agent: ureq::Agent,
    embedding_dim: Mutex<Option<usize>>,
}

impl Adapter {
    /// Builds an adapter from its spec. Mock kinds load their answer
    /// table from the path in `endpoint_or_command`.
    pub fn new(
        spec: SutSpec,
        cache_dir: Option<&Path>,
        offline: bool,
    ) -> Result<Adapter, SutError> {
        spec.validate()?;
        let mock = match spec.kind {
            SutKind::MockScripted | SutKind::MockFaulty => {
                let data = std::fs::read_to_string(&spec.endpoint_or_command).map_err(|e| {
                    SutError::Config(format!(
                        "cannot read answer table {:?}: {e}",
                        spec.endpoint_or_command
                    ))
                })?;
                Some(ScriptedMock::from_tsv(&data)?)
            }
            _ => None,
        };
        Ok(Adapter::assemble(spec, mock, cache_dir, offline))
    }

    /// Builds a mock adapter from an in-memory answer table.
    pub fn with_mock_table(
        spec: SutSpec,
        table: Vec<(String, String)>,
        offline: bool,
    ) -> Result<Adapter, SutError> {
        if !matches!(spec.kind, SutKind::MockScripted | SutKind::MockFaulty) {
            return Err(SutError::Config(
                "an in-memory answer table requires a mock SUT kind".to_string(),
            ));
        }
        if let SutKind::MockFaulty = spec.kind {
            spec.fault
                .as_ref()
                .ok_or_else(|| SutError::Config("mock-faulty requires a fault model".to_string()))?
                .validate()?;
        }
        Ok(Adapter::assemble(spec, Some(ScriptedMock::new(table)), None, offline))
    }

    fn assemble(
        spec: SutSpec,
        mock: Option<ScriptedMock>,
        cache_dir: Option<&Path>,
        offline: bool,
    ) -> Adapter {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(spec.timeout_ms))
            .build();
        Adapter {
            cache: cache_dir.map(Cache::new),
            spec,
            offline,
            mock,
            agent,
            embedding_dim: Mutex::new(None),
        }
    }

    pub fn spec(&self) -> &SutSpec {
        &self.spec
    }

    /// Executes one prompt against the SUT. The cache, when configured,
    /// is consulted before the network; offline mode never touches the
    /// network and errors on a cache miss.
    pub fn query(&self, prompt: &str, repetition: u32) -> Result<Execution, SutError> {
        if prompt.is_empty() {
            return Err(SutError::Config("prompt must be non-empty".to_string()));
        }
        let start = Instant::now();
        match self.spec.kind {
            SutKind::MockScripted => {
                let mock = self.mock.as_ref().expect("scripted mock has a table");
                Ok(done(mock.answer(prompt), start, false))
            }
            SutKind::MockFaulty => Ok(done(self.faulty_answer(prompt, repetition), start, false)),
            SutKind::BuiltinFunction => {
                let output = builtin_eval(&self.spec.endpoint_or_command, prompt)?;
                Ok(done(output, start, false))
            }
            SutKind::Subprocess => self.subprocess_query(prompt, start),
            SutKind::HttpChat => self.http_query(prompt, repetition, start),
        }
    }

    fn faulty_answer(&self, prompt: &str, repetition: u32) -> String {
        let mock = self.mock.as_ref().expect("faulty mock has a table");
        let fault = self.spec.fault.expect("faulty mock has a fault model");
        let mut answer = mock.answer(prompt);
        let perturbed = !mock.is_verbatim(prompt);
        if perturbed
            && keyed_coin(fault.rng_seed, &[b"phrasing", prompt.as_bytes()], fault.phrasing_sensitivity)
        {
            let tag = keyed_hash64(fault.rng_seed, &[b"divergent", prompt.as_bytes()]);
            answer = format!("{answer} (divergent {tag:08x})");
        }
        if keyed_coin(
            fault.rng_seed,
            &[b"rep", prompt.as_bytes(), &repetition.to_le_bytes()],
            fault.nondeterminism,
        ) {
            let tag =
                keyed_hash64(fault.rng_seed, &[b"variant", prompt.as_bytes(), &repetition.to_le_bytes()]);
            answer = format!("{answer} (variant {tag:08x})");
        }
        answer
    }

    fn subprocess_query(&self, prompt: &str, start: Instant) -> Result<Execution, SutError> {
        let argv: Vec<String> = self
            .spec
            .endpoint_or_command
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let timeout = Duration::from_millis(self.spec.timeout_ms);
        let run = process::run_with_timeout(&argv, Some(prompt), timeout)
            .map_err(|e| SutError::Subprocess(format!("failed to start: {e}")))?;
        if run.timed_out {
            return Err(SutError::Timeout(self.spec.timeout_ms));
        }
        match run.code {
            Some(0) => Ok(done(run.stdout.trim_end().to_string(), start, false)),
            Some(code) => Err(SutError::Subprocess(format!(
                "exit status {code}: {}",
                excerpt(&run.stderr)
            ))),
            None => Err(SutError::Subprocess("killed by signal".to_string())),
        }
    }

    fn http_query(
        &self,
        prompt: &str,
        repetition: u32,
        start: Instant,
    ) -> Result<Execution, SutError> {
        let key = CacheKey::for_query(&self.spec, "chat", prompt, repetition);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                let output = chat_content(&entry.response)?;
                return Ok(done(output, start, true));
            }
        }
        if self.offline {
            return Err(SutError::Offline("completion"));
        }
        let mut request = serde_json::json!({
            "model": self.spec.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.spec.temperature,
            "max_tokens": self.spec.max_tokens,
        });
        if let Some(seed) = self.spec.request_seed {
            request["seed"] = serde_json::json!(seed);
        }
        let response = self.post_with_retries(&self.spec.endpoint_or_command, &request)?;
        let output = chat_content(&response)?;
        self.record(&key, request, response)?;
        Ok(done(output, start, false))
    }

    /// Fetches an embedding vector for the text, using the same cache
    /// scheme as chat queries.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>, SutError> {
        let key = CacheKey::for_query(&self.spec, "embed", text, 0);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                return self.embedding_vector(&entry.response);
            }
        }
        if self.offline {
            return Err(SutError::Offline("embedding"));
        }
        let request = serde_json::json!({ "model": self.spec.model_id, "input": text });
        let response = self.post_with_retries(&self.spec.endpoint_or_command, &request)?;
        let vector = self.embedding_vector(&response)?;
        self.record(&key, request, response)?;
        Ok(vector)
    }

    fn embedding_vector(&self, response: &serde_json::Value) -> Result<Vec<f64>, SutError> {
        let vector: Vec<f64> = response["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| SutError::Malformed("response lacks data[0].embedding".to_string()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| SutError::Malformed("non-numeric embedding".to_string())))
            .collect::<Result<_, _>>()?;
        let mut dim = self.embedding_dim.lock().expect("embedding dim lock");
        match *dim {
            Some(expected) if expected != vector.len() => Err(SutError::Config(format!(
                "embedding dimension changed mid-run: {expected} then {}",
                vector.len()
            ))),
            _ => {
                *dim = Some(vector.len());
                Ok(vector)
            }
        }
    }

    fn record(
        &self,
        key: &CacheKey,
        request: serde_json::Value,
        response: serde_json::Value,
    ) -> Result<(), SutError> {
        let Some(cache) = &self.cache else { return Ok(()) };
        let created_at = time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .expect("RFC 3339 formatting");
        cache.put(
            key,
            &CacheEntry { key: key.digest.clone(), request, response, created_at },
        )
    }

    fn post_with_retries(
        &self,
        url: &str,
        request: &serde_json::Value,
    ) -> Result<serde_json::Value, SutError> {
        let body = request.to_string();
        let mut attempt = 0u32;
        loop {
            match self.post_once(url, &body) {
                Ok(response) => return Ok(response),
                Err(Retry::Fatal(error)) => return Err(error),
                Err(Retry::Transient(error)) => {
                    if attempt >= self.spec.retries {
                        return Err(error);
                    }
                    let backoff = self.spec.backoff_base_ms.saturating_mul(1 << attempt);
                    std::thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
            }
        }
    }

    fn post_once(&self, url: &str, body: &str) -> Result<serde_json::Value, Retry> {
        let mut request = self.agent.post(url).set("content-type", "application/json");
        if let Some(var) = &self.spec.auth_env {
            if let Ok(token) = std::env::var(var) {
                request = request.set("authorization", &format!("Bearer {token}"));
            }
        }
        let response = match request.send_string(body) {
            Ok(response) => response,
            Err(ureq::Error::Status(code, response)) => {
                let excerpt = response.into_string().map(|s| excerpt(&s)).unwrap_or_default();
                let error = SutError::Transport(format!("http status {code}: {excerpt}"));
                return Err(if code == 429 || code >= 500 {
                    Retry::Transient(error)
                } else {
                    Retry::Fatal(error)
                });
            }
            Err(ureq::Error::Transport(transport)) => {
                return Err(Retry::Transient(SutError::Transport(transport.to_string())))
            }
        };
        let text = response
            .into_string()
            .map_err(|e| Retry::Transient(SutError::Transport(e.to_string())))?;
        serde_json::from_str(&text)
            .map_err(|_| Retry::Fatal(SutError::Malformed(excerpt(&text))))
    }
}

enum Retry {
    Transient(SutError),
    Fatal(SutError),
}

fn done(output: String, start: Instant, cache_hit: bool) -> Execution {
    Execution { output, latency_ms: start.elapsed().as_millis() as u64, cache_hit }
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).map(|c| if c == '\n' { ' ' } else { c }).collect()
}

fn chat_content(response: &serde_json::Value) -> Result<String, SutError> {
    response["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| {
            SutError::Malformed(format!(
                "response lacks choices[0].message.content: {}",
                excerpt(&response.to_string())
            ))
        })
}

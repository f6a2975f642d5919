//! Run orchestration: derives follow-up inputs from metamorphic
//! relations, schedules SUT calls across a worker budget, combines
//! per-repetition verdicts, and compares failure rates across runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{Adapter, SutError, SutSpec};
use crate::canon::{keyed_hash64, sha256_hex};
use crate::model::{
    round_rate, Aggregation, InconclusiveReason, MetamorphicRelation, ModelError,
    ProvenanceStep, RunReport, SourceInput, TestPair, Verdict, VerdictOutcome,
};
use crate::relations::{ComparatorKind, EvalContext, RelationError};
use crate::transforms::{apply_pipeline, Lexicons, TransformError, TransformOutcome};

/// Everything one run needs: the input suite, the MR set, how to reach
/// the SUT, and the knobs that make the run reproducible.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub suite: Vec<SourceInput>,
    pub mrs: Vec<MetamorphicRelation>,
    pub sut: SutSpec,
    /// Endpoint for the `embedding-endpoint` comparator, when any MR uses it.
    pub embedding_sut: Option<SutSpec>,
    pub derivation_seed: u64,
    pub worker_budget: usize,
    pub offline: bool,
    /// Prompt templates by id; `{text}` is replaced with the input text.
    /// Inputs without a template id are sent verbatim.
    pub templates: BTreeMap<String, String>,
    pub external_timeout_ms: u64,
}

impl RunPlan {
    pub fn new(suite: Vec<SourceInput>, mrs: Vec<MetamorphicRelation>, sut: SutSpec) -> RunPlan {
        RunPlan {
            suite,
            mrs,
            sut,
            embedding_sut: None,
            derivation_seed: 0,
            worker_budget: 4,
            offline: false,
            templates: BTreeMap::new(),
            external_timeout_ms: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.worker_budget == 0 {
            return Err(EngineError::Config("worker budget must be at least 1".to_string()));
        }
        crate::model::validate_suite(&self.suite)?;
        let mut seen = BTreeMap::new();
        for mr in &self.mrs {
            mr.validate()?;
            mr.output_relation.validate()?;
            mr.comparator.validate()?;
            for step in &mr.transform_pipeline {
                step.validate()?;
            }
            if seen.insert(&mr.id, ()).is_some() {
                return Err(EngineError::Config(format!("duplicate MR id {:?}", mr.id)));
            }
            if mr.comparator.kind == ComparatorKind::EmbeddingEndpoint
                && self.embedding_sut.is_none()
            {
                return Err(EngineError::Config(format!(
                    "MR {:?} uses the embedding-endpoint comparator but no embedding SUT is configured",
                    mr.id
                )));
            }
        }
        for input in &self.suite {
            if let Some(template_id) = &input.prompt_template_id {
                if !self.templates.contains_key(template_id) {
                    return Err(EngineError::Config(format!(
                        "input {:?} names unknown prompt template {:?}",
                        input.id, template_id
                    )));
                }
            }
        }
        self.sut.validate()?;
        if let Some(embedding) = &self.embedding_sut {
            embedding.validate()?;
        }
        Ok(())
    }
}

/// Why an (input, MR) combination produced no test pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    /// Absent when the whole MR was skipped (no applicable inputs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_id: Option<String>,
    pub mr_id: String,
    pub note: String,
}

/// Output of pair generation: the executable pairs plus an audit trail
/// of everything that was skipped. Skips never enter failure-rate
/// denominators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPairs {
    pub pairs: Vec<TestPair>,
    pub skipped: Vec<SkipRecord>,
}

/// One SUT call in the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub pair_id: String,
    pub side: String,
    pub repetition: u32,
    pub cache_hit: bool,
    pub latency_ms: u64,
    pub output_digest: String,
}

/// Verdicts in pair order plus the per-call execution log.
#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    pub verdicts: Vec<Verdict>,
    pub log: Vec<ExecutionRecord>,
}

/// Failure-rate movement of one MR between two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDelta {
    pub mr_id: String,
    pub rate_before: f64,
    pub rate_after: f64,
    pub delta: f64,
    pub flagged: bool,
}

/// Drift comparison of two runs: per-MR deltas for shared MRs, plus the
/// MRs present on only one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub deltas: Vec<DriftDelta>,
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

impl DriftReport {
    pub fn any_flagged(&self) -> bool {
        self.deltas.iter().any(|d| d.flagged)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Sut(#[from] SutError),
    #[error("configuration: {0}")]
    Config(String),
}

/// Derives the follow-up for every applicable (input, MR) combination.
///
/// The per-pair seed is a keyed hash of (derivation seed, input id,
/// MR id), so a pair's follow-up never changes when the suite grows or
/// reorders. Output order is input order × MR order.
pub fn generate_pairs(plan: &RunPlan) -> Result<GeneratedPairs, EngineError> {
    plan.validate()?;
    let lexicons = Lexicons::default();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut mr_hits: BTreeMap<&str, usize> = BTreeMap::new();
    for input in &plan.suite {
        for mr in &plan.mrs {
            if !mr.applies_to.includes(input.task) {
                continue;
            }
            *mr_hits.entry(mr.id.as_str()).or_insert(0) += 1;
            let seed = keyed_hash64(
                plan.derivation_seed,
                &[input.id.as_bytes(), mr.id.as_bytes()],
            );
            let outcome = apply_pipeline(&mr.transform_pipeline, input, &lexicons, seed)
                .map_err(|e| {
                    EngineError::Config(format!(
                        "input {:?}, MR {:?}: {e}",
                        input.id, mr.id
                    ))
                })?;
            match outcome {
                TransformOutcome::Applied(text) => {
                    let mut followup = input.clone();
                    followup.text = text;
                    let provenance = mr
                        .transform_pipeline
                        .iter()
                        .map(|step| ProvenanceStep {
                            transform: step.name.clone(),
                            parameters: step.parameters.clone(),
                            seed,
                        })
                        .collect();
                    pairs.push(TestPair {
                        source: input.clone(),
                        followup,
                        mr_id: mr.id.clone(),
                        provenance,
                        derivation_seed: seed,
                    });
                }
                TransformOutcome::Inapplicable(note) => skipped.push(SkipRecord {
                    input_id: Some(input.id.clone()),
                    mr_id: mr.id.clone(),
                    note,
                }),
            }
        }
    }
    for mr in &plan.mrs {
        if !mr_hits.contains_key(mr.id.as_str()) {
            skipped.push(SkipRecord {
                input_id: None,
                mr_id: mr.id.clone(),
                note: "applies-to matches no input in the suite".to_string(),
            });
        }
    }
    Ok(GeneratedPairs { pairs, skipped })
}

/// Executes every pair against the SUT, `repetitions` times per side,
/// and combines repetition verdicts by the MR's aggregation mode.
///
/// SUT calls are dispatched across `worker_budget` threads; verdict and
/// log order match pair order regardless of completion order, so reports
/// are byte-identical across budgets.
pub fn execute(
    plan: &RunPlan,
    pairs: &[TestPair],
    adapter: &Adapter,
    embedding_adapter: Option<&Adapter>,
) -> Result<ExecutionOutcome, EngineError> {
    let mrs: BTreeMap<&str, &MetamorphicRelation> =
        plan.mrs.iter().map(|mr| (mr.id.as_str(), mr)).collect();
    for pair in pairs {
        if !mrs.contains_key(pair.mr_id.as_str()) {
            return Err(EngineError::Config(format!(
                "pair {:?} references unknown MR {:?}",
                pair.pair_id(),
                pair.mr_id
            )));
        }
    }
    let workers = plan.worker_budget.max(1).min(pairs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<(Verdict, Vec<ExecutionRecord>)>> = Vec::new();
    slots.resize_with(pairs.len(), || None);

    let worker_results: Vec<Vec<(usize, Verdict, Vec<ExecutionRecord>)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let index = next.fetch_add(1, Ordering::Relaxed);
                            if index >= pairs.len() {
                                break;
                            }
                            let pair = &pairs[index];
                            let mr = mrs[pair.mr_id.as_str()];
                            let (verdict, log) =
                                run_pair(plan, pair, mr, adapter, embedding_adapter);
                            local.push((index, verdict, log));
                        }
                        local
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|handle| handle.join().expect("engine worker panicked"))
                .collect()
        });
    for (index, verdict, log) in worker_results.into_iter().flatten() {
        slots[index] = Some((verdict, log));
    }

    let mut verdicts = Vec::with_capacity(pairs.len());
    let mut log = Vec::new();
    for slot in slots {
        let (verdict, records) = slot.expect("every pair slot is filled");
        verdicts.push(verdict);
        log.extend(records);
    }
    Ok(ExecutionOutcome { verdicts, log })
}

fn render_prompt(plan: &RunPlan, input: &SourceInput) -> String {
    match &input.prompt_template_id {
        Some(id) => plan.templates[id].replace("{text}", &input.text),
        None => input.text.clone(),
    }
}

fn run_pair(
    plan: &RunPlan,
    pair: &TestPair,
    mr: &MetamorphicRelation,
    adapter: &Adapter,
    embedding_adapter: Option<&Adapter>,
) -> (Verdict, Vec<ExecutionRecord>) {
    let id = pair.pair_id();
    let source_prompt = render_prompt(plan, &pair.source);
    let followup_prompt = render_prompt(plan, &pair.followup);
    let mut log = Vec::new();
    let mut reps = Vec::with_capacity(mr.repetitions as usize);
    for repetition in 0..mr.repetitions {
        let mut side = |prompt: &str, tag: &str| -> Result<String, SutError> {
            let execution = adapter.query(prompt, repetition)?;
            log.push(ExecutionRecord {
                pair_id: id.clone(),
                side: tag.to_string(),
                repetition,
                cache_hit: execution.cache_hit,
                latency_ms: execution.latency_ms,
                output_digest: sha256_hex(execution.output.as_bytes()),
            });
            Ok(execution.output)
        };
        let outputs = side(&source_prompt, "source")
            .and_then(|source| side(&followup_prompt, "followup").map(|f| (source, f)));
        let verdict = match outputs {
            Err(error) => Verdict::inconclusive(
                id.clone(),
                mr.id.clone(),
                InconclusiveReason::SutError,
                error.to_string(),
            ),
            Ok((source_output, followup_output)) => {
                let mut ctx = EvalContext::new(id.clone(), mr.id.clone())
                    .with_external_timeout(Duration::from_millis(plan.external_timeout_ms));
                if mr.comparator.kind == ComparatorKind::EmbeddingEndpoint {
                    match embedding_score(embedding_adapter, &source_output, &followup_output) {
                        Ok(score) => ctx = ctx.with_embedding_score(score),
                        Err(error) => {
                            reps.push(Verdict::inconclusive(
                                id.clone(),
                                mr.id.clone(),
                                InconclusiveReason::SutError,
                                error.to_string(),
                            ));
                            continue;
                        }
                    }
                }
                crate::relations::evaluate(
                    &mr.output_relation,
                    &mr.comparator,
                    &source_output,
                    &followup_output,
                    &ctx,
                )
            }
        };
        reps.push(verdict);
    }
    (combine_repetitions(mr, reps), log)
}

fn embedding_score(
    adapter: Option<&Adapter>,
    source_output: &str,
    followup_output: &str,
) -> Result<f64, SutError> {
    let adapter = adapter.ok_or_else(|| {
        SutError::Config("embedding-endpoint comparator without an embedding SUT".to_string())
    })?;
    let a = adapter.embed(source_output)?;
    let b = adapter.embed(followup_output)?;
    Ok(crate::relations::cosine(&a, &b))
}

/// Combines per-repetition verdicts under the MR's aggregation mode.
/// Inconclusive repetitions abstain; a pair whose repetitions all
/// abstain is inconclusive.
fn combine_repetitions(mr: &MetamorphicRelation, reps: Vec<Verdict>) -> Verdict {
    let summary = if reps.len() > 1 {
        let count = |o: VerdictOutcome| reps.iter().filter(|v| v.outcome == o).count();
        Some(format!(
            " [repetitions: {} pass, {} violation, {} inconclusive]",
            count(VerdictOutcome::Pass),
            count(VerdictOutcome::Violation),
            count(VerdictOutcome::Inconclusive)
        ))
    } else {
        None
    };
    let pick = |outcome: VerdictOutcome, reps: &[Verdict]| -> Option<Verdict> {
        reps.iter().find(|v| v.outcome == outcome).cloned()
    };
    let passes = reps.iter().filter(|v| v.outcome == VerdictOutcome::Pass).count();
    let violations = reps.iter().filter(|v| v.outcome == VerdictOutcome::Violation).count();
    let mut combined = match mr.aggregation {
        Aggregation::AnyViolation => pick(VerdictOutcome::Violation, &reps)
            .or_else(|| pick(VerdictOutcome::Pass, &reps))
            .or_else(|| pick(VerdictOutcome::Inconclusive, &reps)),
        Aggregation::Majority => {
            if passes + violations == 0 {
                pick(VerdictOutcome::Inconclusive, &reps)
            } else if violations > passes {
                pick(VerdictOutcome::Violation, &reps)
            } else if passes > violations {
                pick(VerdictOutcome::Pass, &reps)
            } else {
                Some(Verdict::inconclusive(
                    reps[0].pair_id.clone(),
                    mr.id.clone(),
                    InconclusiveReason::UncertaintyBand,
                    "majority tie between pass and violation repetitions".to_string(),
                ))
            }
        }
        Aggregation::All => {
            if passes + violations == 0 {
                pick(VerdictOutcome::Inconclusive, &reps)
            } else if passes == 0 {
                pick(VerdictOutcome::Violation, &reps)
            } else {
                pick(VerdictOutcome::Pass, &reps)
            }
        }
    }
    .expect("repetitions is at least 1");
    if let Some(summary) = summary {
        combined.detail.push_str(&summary);
    }
    combined
}

/// Compares per-MR failure rates between two runs. An MR drifts when
/// |after − before| ≥ epsilon; MRs present in only one run are listed
/// as added or removed instead of producing a delta.
pub fn drift_diff(before: &RunReport, after: &RunReport, epsilon: f64) -> DriftReport {
    let mut deltas = Vec::new();
    let mut removed = Vec::new();
    for (mr_id, tally) in &before.per_mr {
        match after.per_mr.get(mr_id) {
            Some(after_tally) => {
                let delta = round_rate(after_tally.failure_rate - tally.failure_rate);
                deltas.push(DriftDelta {
                    mr_id: mr_id.clone(),
                    rate_before: tally.failure_rate,
                    rate_after: after_tally.failure_rate,
                    delta,
                    flagged: delta.abs() >= epsilon,
                });
            }
            None => removed.push(mr_id.clone()),
        }
    }
    let added = after
        .per_mr
        .keys()
        .filter(|id| !before.per_mr.contains_key(*id))
        .cloned()
        .collect();
    DriftReport { deltas, added, removed }
}

/// Convenience for generate → execute → aggregate in one call.
pub fn run(
    plan: &RunPlan,
    adapter: &Adapter,
    embedding_adapter: Option<&Adapter>,
    meta: crate::model::RunMeta,
) -> Result<(RunReport, GeneratedPairs, ExecutionOutcome), EngineError> {
    let generated = generate_pairs(plan)?;
    let outcome = execute(plan, &generated.pairs, adapter, embedding_adapter)?;
    let report = RunReport::aggregate(&outcome.verdicts, &generated.pairs, meta)?;
    Ok((report, generated, outcome))
}

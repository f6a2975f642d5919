//! Metamorphic testing for black-box text systems.
//!
//! Systems like language-model endpoints have no practical reference
//! answers, so their tests cannot compare outputs against known-good
//! values. A *metamorphic relation* supplies the missing check: a
//! transformation of the input paired with a relation the two outputs
//! must satisfy. Fixing a typo must not change the answer; negating the
//! argument of a squaring function must not change its output. This
//! crate declares such relations, derives follow-up inputs through
//! deterministic transforms, executes both sides against the system
//! under test, and reports per-relation failure rates and their drift
//! across runs, all without a single ground-truth label.
//!
//! The crate is organized around the run pipeline:
//!
//! - [`model`]: shared domain vocabulary (inputs, relations, pairs,
//!   verdicts, reports) and the pure accounting functions over them.
//! - [`transforms`]: seed-reproducible input transformations, the input
//!   side of each metamorphic relation.
//! - [`relations`]: output comparators and verdict production, the output
//!   side.
//! - [`adapters`]: system-under-test access over HTTP chat endpoints,
//!   subprocesses, deterministic mocks with fault injection, and builtin
//!   functions, plus a record/replay cache.
//! - [`engine`]: run orchestration, from pair generation through scheduled
//!   execution with repetitions to cross-run drift comparison.
//! - [`mrspec`]: the `.mrs` relation language (parser, validator, and
//!   canonical serializer).
//! - [`reporting`]: run persistence, triage annotations, and human/CI
//!   renderings such as tables and JUnit XML.

pub mod adapters;
pub mod canon;
pub mod engine;
pub mod model;
pub mod mrspec;
mod process;
pub mod relations;
pub mod reporting;
pub mod transforms;

pub use model::{
    failure_rate, Annotation, MetamorphicRelation, RunReport, SourceInput, TaskKind, TestPair,
    Verdict, VerdictOutcome,
};

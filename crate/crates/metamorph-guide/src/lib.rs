//! The user guide, embedded as documentation.
//!
//! Each module below inlines one chapter from `book/src`, so every Rust
//! code block in the book compiles and runs under `cargo test --doc`.
//! The rendered book and the tested examples are the same files and
//! cannot drift apart.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/relations.md")]
pub mod relations {}

#[doc = include_str!("../../../book/src/transforms.md")]
pub mod transforms {}

#[doc = include_str!("../../../book/src/comparators.md")]
pub mod comparators {}

#[doc = include_str!("../../../book/src/mrs-dsl.md")]
pub mod mrs_dsl {}

#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}

#[doc = include_str!("../../../book/src/reporting.md")]
pub mod reporting {}

#[doc = include_str!("../../../book/src/triage.md")]
pub mod triage {}

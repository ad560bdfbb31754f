//! Scoring and evaluation of implicit-offense reasoning chains.
//!
//! A chain rewrites an implicitly offensive statement `s0` step by step into
//! an explicit one `sL`. This crate loads and validates chain corpora, scores
//! them through pluggable entailment and offensive-text-detection backends,
//! and aggregates the scores into evaluation tables.

pub mod attributes;
pub mod backend;
pub mod chain;
pub mod dataset;
pub mod engine;
pub mod evaluation;
pub mod exec;
pub mod fixtures;
pub mod manifest;
pub mod pipeline;
pub mod probe;

pub use backend::{Backend, BackendError, BackendSpec, MockBackend};
pub use chain::{
    Attribute, Blocklist, Category, ReasoningChain, ReasoningStep, StepTag, Subcategory, ValidationMode,
    ValidationResult,
};
pub use engine::{ChainScoreReport, Variant};

//! Dual-chain narrative reasoning over video series, plus the evaluation
//! harness around it.

pub mod backend;
pub mod chains;
pub mod config;
pub mod datamodel;
pub mod fixtures;
pub mod harness;
pub mod metrics;
pub mod num;
pub mod prompt;
pub mod record;
pub mod retrieval;
pub mod similarity;
pub mod templates;
pub mod transform;

/// Embedding vector as produced by the backends.
pub type Vector = Vec<f32>;
/// Score type used by the metrics and reports.
pub type Score = f64;
/// Greedy matching result at report precision.
pub type GreedyMatchF64 = similarity::GreedyMatch<f64>;

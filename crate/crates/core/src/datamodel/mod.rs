//! Corpus domain types, manifest IO and structural validation.

mod io;
mod taxonomy;
mod types;
mod validate;

pub use io::*;
pub use taxonomy::{Dimension, Subtask, TaskTaxonomy};
pub use types::*;
pub use validate::{
    annotation_violations, question_violations, validate_corpus, ValidationReport, Violation, ViolationKind,
};

//! Answer parsing, accuracy and open-ended text metrics.

mod choice;
mod lexical;
mod tokenize;

pub use choice::{parse_choice, ParseRule, ParsedChoice};
pub use lexical::{
    align, bleu2_tokens, count_chunks, meteor_from_counts, meteor_tokens, stem, BleuOptions, BLEU_EPSILON,
};
pub use tokenize::{is_cjk, CjkMode, Tokenizer};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::backend::{BackendError, Client};
use crate::datamodel::{AnswerKey, Dimension, TaskTaxonomy};
use crate::similarity::{greedy_match, similarity_matrix, GreedyMatch, SimilarityError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no records to score")]
    Empty,
    #[error("empty {0} text")]
    EmptyText(&'static str),
    #[error("unknown subtask `{0}`")]
    UnknownSubtask(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub bleu2: f64,
    pub meteor: f64,
    pub semantic_f1: f64,
}

pub fn bleu2(candidate: &str, reference: &str, tokenizer: &Tokenizer) -> f64 {
    bleu2_with(candidate, reference, tokenizer, BleuOptions::default())
}

pub fn bleu2_with(candidate: &str, reference: &str, tokenizer: &Tokenizer, opts: BleuOptions) -> f64 {
    bleu2_tokens(&tokenizer.tokenize(candidate), &tokenizer.tokenize(reference), opts)
}

/// METEOR with exact and (optionally) stem matching; no synonym stage.
pub fn meteor_lite(
    candidate: &str,
    reference: &str,
    tokenizer: &Tokenizer,
    stemmer: Option<fn(&str) -> String>,
) -> f64 {
    meteor_tokens(&tokenizer.tokenize(candidate), &tokenizer.tokenize(reference), stemmer)
}

/// Greedy-matching F1 over precomputed token vectors.
pub fn semantic_f1_vectors(candidate: &[Vec<f32>], reference: &[Vec<f32>]) -> Result<GreedyMatch<f64>, MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyText("candidate"));
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyText("reference"));
    }
    let widen =
        |vs: &[Vec<f32>]| vs.iter().map(|v| v.iter().map(|&x| f64::from(x)).collect()).collect::<Vec<Vec<f64>>>();
    let sim = similarity_matrix(&widen(candidate), &widen(reference))?;
    Ok(greedy_match(&sim)?)
}

/// Token-level embedding F1. Each distinct token is embedded once.
pub fn semantic_f1(
    candidate: &str,
    reference: &str,
    tokenizer: &Tokenizer,
    client: &Client,
) -> Result<f64, MetricError> {
    let (c, r) = (tokenizer.tokenize(candidate), tokenizer.tokenize(reference));
    if c.is_empty() {
        return Err(MetricError::EmptyText("candidate"));
    }
    if r.is_empty() {
        return Err(MetricError::EmptyText("reference"));
    }
    let mut cache: BTreeMap<&str, Vec<f32>> = BTreeMap::new();
    for t in c.iter().chain(&r) {
        if !cache.contains_key(t.as_str()) {
            cache.insert(t, client.embed_text(t)?);
        }
    }
    let lookup = |ts: &[String]| ts.iter().map(|t| cache[t.as_str()].clone()).collect::<Vec<_>>();
    Ok(semantic_f1_vectors(&lookup(&c), &lookup(&r))?.f1)
}

pub fn open_ended_scores(
    candidate: &str,
    reference: &str,
    tokenizer: &Tokenizer,
    client: &Client,
) -> Result<MetricScores, MetricError> {
    Ok(MetricScores {
        bleu2: bleu2(candidate, reference, tokenizer),
        meteor: meteor_lite(candidate, reference, tokenizer, Some(stem)),
        semantic_f1: semantic_f1(candidate, reference, tokenizer, client)?,
    })
}

/// Correct/total counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    pub fn merge(&mut self, other: Tally) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBreakdown {
    pub overall: Tally,
    pub by_dimension: BTreeMap<Dimension, Tally>,
    pub by_subtask: BTreeMap<String, Tally>,
    /// Responses no parsing rule could read.
    pub unparsed: usize,
}

impl AccuracyBreakdown {
    pub fn accuracy(&self) -> f64 {
        self.overall.rate().unwrap_or(0.0)
    }
}

/// One scored choice answer.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceOutcome<'a> {
    pub parsed: &'a ParsedChoice,
    pub key: &'a AnswerKey,
    pub subtask: &'a str,
}

pub fn is_correct(parsed: &ParsedChoice, key: &AnswerKey) -> bool {
    matches!((&parsed.label, &key.label), (Some(p), Some(k)) if p == k)
}

pub fn accuracy(records: &[ChoiceOutcome<'_>], taxonomy: &TaskTaxonomy) -> Result<AccuracyBreakdown, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut out = AccuracyBreakdown::default();
    for r in records {
        let dim = taxonomy.dimension_of(r.subtask).ok_or_else(|| MetricError::UnknownSubtask(r.subtask.to_string()))?;
        let ok = is_correct(r.parsed, r.key);
        out.overall.add(ok);
        out.by_dimension.entry(dim).or_default().add(ok);
        out.by_subtask.entry(r.subtask.to_string()).or_default().add(ok);
        out.unparsed += usize::from(!r.parsed.is_parsed());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(l: &str) -> ParsedChoice {
        ParsedChoice { label: Some(l.into()), rule: ParseRule::LabelToken, raw: l.into() }
    }

    #[test]
    fn six_of_ten() {
        let tax = TaskTaxonomy::builtin();
        let sub = tax.subtasks[0].id.clone();
        let preds: Vec<ParsedChoice> = (0..10).map(|i| parsed(if i < 6 { "A" } else { "B" })).collect();
        let key = AnswerKey::label("A");
        let recs: Vec<ChoiceOutcome> =
            preds.iter().map(|p| ChoiceOutcome { parsed: p, key: &key, subtask: &sub }).collect();
        assert!((accuracy(&recs, &tax).unwrap().accuracy() - 0.6).abs() < 1e-12);
        assert!(matches!(accuracy(&[], &tax), Err(MetricError::Empty)));
    }

    #[test]
    fn unparsed_counts_as_wrong() {
        let tax = TaskTaxonomy::builtin();
        let sub = tax.subtasks[0].id.clone();
        let p = ParsedChoice::unparsed("?");
        let key = AnswerKey::label("A");
        let b = accuracy(&[ChoiceOutcome { parsed: &p, key: &key, subtask: &sub }], &tax).unwrap();
        assert_eq!((b.overall.correct, b.unparsed), (0, 1));
    }

    #[test]
    fn orthogonal_tokens_score_zero() {
        let m = semantic_f1_vectors(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn text_wrappers() {
        let t = Tokenizer::default();
        assert!((bleu2("The cat sat.", "the cat sat on the mat", &t) - 0.3679).abs() < 1e-4);
        assert_eq!(bleu2("", "x", &t), 0.0);
        assert_eq!(meteor_lite("", "x", &t, None), 0.0);
    }
}

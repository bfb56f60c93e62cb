//! Structural validation. Violations are collected, never raised.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use super::taxonomy::TaskTaxonomy;
use super::types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Taxonomy,
    DuplicateId,
    EpisodeOrder,
    Character,
    Frames,
    MissingImage,
    Subtitle,
    Duration,
    DanglingReference,
    UnknownSubtask,
    Options,
    AnswerKey,
    EmptyText,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Path-like location of the offending item, e.g. `series[s01].episodes[2].subtitles[0]`.
    pub locus: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of_kind(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }

    fn push(&mut self, locus: impl Into<String>, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation { locus: locus.into(), kind, message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every corpus invariant. Image files are only checked when the
/// corpus has a non-empty `root_path`.
pub fn validate_corpus(corpus: &SeriesCorpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (locus, msg) in corpus.taxonomy.structural_problems() {
        report.push(locus, ViolationKind::Taxonomy, msg);
    }

    let root = (!corpus.root_path.as_os_str().is_empty()).then_some(corpus.root_path.as_path());
    let mut series_ids = HashSet::new();
    for (si, series) in corpus.series.iter().enumerate() {
        let locus = format!("series[{}]", if series.id.trim().is_empty() { si.to_string() } else { series.id.clone() });
        if series.id.trim().is_empty() {
            report.push(&locus, ViolationKind::EmptyText, "series id is empty");
        }
        if !series_ids.insert(series.id.as_str()) {
            report.push(&locus, ViolationKind::DuplicateId, format!("duplicate series id `{}`", series.id));
        }
        validate_series(series, &locus, root, &mut report);
    }

    let mut question_ids = HashSet::new();
    for (qi, q) in corpus.questions.iter().enumerate() {
        let locus = format!("questions[{qi}] (id={})", q.id);
        if !question_ids.insert(q.id.as_str()) {
            report.push(&locus, ViolationKind::DuplicateId, format!("duplicate question id `{}`", q.id));
        }
        if corpus.episode(&q.series_id, q.episode_index).is_none() {
            report.push(
                &locus,
                ViolationKind::DanglingReference,
                format!("question `{}` references missing episode {}#{}", q.id, q.series_id, q.episode_index),
            );
        }
        report.violations.extend(question_violations(q, &corpus.taxonomy, &locus));
    }
    report
}

fn validate_series(series: &Series, locus: &str, root: Option<&Path>, report: &mut ValidationReport) {
    let mut names = HashSet::new();
    for (ci, c) in series.characters.iter().enumerate() {
        let cl = format!("{locus}.characters[{ci}]");
        if c.name.trim().is_empty() {
            report.push(&cl, ViolationKind::Character, "character name is empty");
        } else if !names.insert(c.name.as_str()) {
            report.push(&cl, ViolationKind::Character, format!("duplicate character name `{}`", c.name));
        }
        if let (Some(p), Some(root)) = (&c.portrait_ref, root) {
            if !p.starts_with(STUB_PREFIX) && !root.join(p).is_file() {
                report.push(&cl, ViolationKind::MissingImage, format!("portrait `{p}` not found"));
            }
        }
    }

    for (ei, ep) in series.episodes.iter().enumerate() {
        let el = format!("{locus}.episodes[{ei}]");
        let expected = ei as u32 + 1;
        if ep.index != expected {
            report.push(
                &el,
                ViolationKind::EpisodeOrder,
                format!("episode index {} out of order (expected {expected})", ep.index),
            );
        }
        if ep.series_id != series.id {
            report.push(
                &el,
                ViolationKind::DanglingReference,
                format!("episode series_id `{}` differs from parent `{}`", ep.series_id, series.id),
            );
        }
        validate_episode(ep, &el, root, report);
    }
}

fn validate_episode(ep: &Episode, locus: &str, root: Option<&Path>, report: &mut ValidationReport) {
    if !(ep.duration_s.is_finite() && ep.duration_s > 0.0) {
        report.push(locus, ViolationKind::Duration, format!("duration_s {} must be positive", ep.duration_s));
    }
    if ep.frames.is_empty() {
        report.push(format!("{locus}.frames"), ViolationKind::Frames, "episode has no frames");
    }
    let mut prev: Option<&FrameEntry> = None;
    for (fi, f) in ep.frames.entries.iter().enumerate() {
        let fl = format!("{locus}.frames[{fi}]");
        if !(f.timestamp_s.is_finite() && f.timestamp_s >= 0.0) {
            report.push(&fl, ViolationKind::Frames, format!("invalid timestamp {}", f.timestamp_s));
        }
        if let Some(p) = prev {
            if f.index <= p.index {
                report.push(&fl, ViolationKind::Frames, format!("frame index {} not after {}", f.index, p.index));
            }
            if f.timestamp_s < p.timestamp_s {
                report.push(
                    &fl,
                    ViolationKind::Frames,
                    format!("timestamp {} decreases (previous {})", f.timestamp_s, p.timestamp_s),
                );
            }
        }
        if f.image_ref.trim().is_empty() {
            report.push(&fl, ViolationKind::MissingImage, "empty image_ref");
        } else if let Some(root) = root {
            if !f.is_stub() && !root.join(&f.image_ref).is_file() {
                report.push(&fl, ViolationKind::MissingImage, format!("image `{}` not found", f.image_ref));
            }
        }
        prev = Some(f);
    }
    for (ci, cue) in ep.subtitles.iter().enumerate() {
        let cl = format!("{locus}.subtitles[{ci}]");
        if cue.start_s > cue.end_s {
            report.push(&cl, ViolationKind::Subtitle, format!("start_s {} > end_s {}", cue.start_s, cue.end_s));
        }
        if cue.start_s < 0.0 || cue.end_s > ep.duration_s {
            report.push(
                &cl,
                ViolationKind::Subtitle,
                format!("cue [{}, {}] outside [0, {}]", cue.start_s, cue.end_s, ep.duration_s),
            );
        }
    }
}

/// Question-level invariants that do not need the rest of the corpus.
pub fn question_violations(q: &Question, taxonomy: &TaskTaxonomy, locus: &str) -> Vec<Violation> {
    let mut r = ValidationReport::default();
    if q.id.trim().is_empty() {
        r.push(locus, ViolationKind::EmptyText, "question id is empty");
    }
    if q.stem.trim().is_empty() {
        r.push(locus, ViolationKind::EmptyText, "question stem is empty");
    }
    if taxonomy.subtask(&q.subtask).is_none() {
        r.push(locus, ViolationKind::UnknownSubtask, format!("unknown subtask `{}`", q.subtask));
    }

    let mut labels = HashSet::new();
    for (oi, o) in q.options.iter().enumerate() {
        if o.label.trim().is_empty() || o.text.trim().is_empty() {
            r.push(format!("{locus}.options[{oi}]"), ViolationKind::Options, "option label or text empty");
        }
        if !labels.insert(o.label.as_str()) {
            r.push(format!("{locus}.options[{oi}]"), ViolationKind::Options, format!("duplicate label `{}`", o.label));
        }
    }
    match q.format {
        QuestionFormat::Multichoice => {
            if !(2..=5).contains(&q.options.len()) {
                r.push(
                    locus,
                    ViolationKind::Options,
                    format!("multichoice needs 2-5 options, has {}", q.options.len()),
                );
            }
        }
        QuestionFormat::Judgment => {
            let texts: Vec<&str> = q.options.iter().map(|o| o.text.as_str()).collect();
            if q.options.len() != 2 {
                r.push(
                    locus,
                    ViolationKind::Options,
                    format!("judgment needs exactly 2 options, has {}", q.options.len()),
                );
            } else if !(texts.contains(&JUDGMENT_TRUE) && texts.contains(&JUDGMENT_FALSE)) {
                r.push(locus, ViolationKind::Options, "judgment options must be the True/False pair");
            }
        }
        QuestionFormat::OpenEnded => {
            if !q.options.is_empty() {
                r.push(locus, ViolationKind::Options, "open-ended question must not carry options");
            }
        }
    }

    match (q.format.is_choice(), &q.answer.label, &q.answer.reference_text) {
        (true, Some(label), None) => {
            if !labels.contains(label.as_str()) {
                r.push(locus, ViolationKind::AnswerKey, format!("answer label `{label}` is not an option"));
            }
        }
        (false, None, Some(text)) => {
            if text.trim().is_empty() {
                r.push(locus, ViolationKind::AnswerKey, "open-ended reference text is empty");
            }
        }
        (true, _, _) => r.push(locus, ViolationKind::AnswerKey, "choice question needs exactly an answer label"),
        (false, _, _) => r.push(locus, ViolationKind::AnswerKey, "open-ended question needs exactly a reference text"),
    }
    r.violations
}

pub fn annotation_violations(a: &Annotation, taxonomy: &TaskTaxonomy) -> Vec<Violation> {
    let locus = format!("annotation({})", a.id);
    let mut r = ValidationReport::default();
    if a.time_spans.is_empty() {
        r.push(&locus, ViolationKind::Annotation, "annotation has no time span");
    }
    for (i, [s, e]) in a.time_spans.iter().enumerate() {
        if s > e {
            r.push(format!("{locus}.time_spans[{i}]"), ViolationKind::Annotation, format!("span start {s} > end {e}"));
        }
    }
    if a.declarative_statement.trim().is_empty() {
        r.push(&locus, ViolationKind::EmptyText, "declarative statement is empty");
    }
    if taxonomy.subtask(&a.subtask).is_none() {
        r.push(&locus, ViolationKind::UnknownSubtask, format!("unknown subtask `{}`", a.subtask));
    }
    r.violations
}

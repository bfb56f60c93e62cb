//! Turns declarative annotations into choice, judgment and open-ended
//! questions through a chat backend, and audits generated sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;
use thiserror::Error;

use crate::backend::{BackendError, Client, ContentPart, Stage};
use crate::datamodel::{
    annotation_violations, judgment_options, question_violations, Annotation, AnswerKey, CharacterProfile,
    ChoiceOption, Provenance, Question, QuestionFormat, SeriesCorpus, TaskTaxonomy, Violation, JUDGMENT_FALSE,
    JUDGMENT_TRUE,
};
use crate::metrics::Tokenizer;
use crate::prompt::format_time;
use crate::templates::{TemplateError, TemplateSet};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("annotation `{id}` is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidAnnotation { id: String, violations: Vec<Violation> },
    #[error("annotation `{id}` references missing episode {series_id}#{episode_index}")]
    MissingEpisode { id: String, series_id: String, episode_index: u32 },
    #[error("distractor count {0} outside 1..=4")]
    DistractorCount(usize),
    #[error("no target formats requested")]
    NoFormats,
    #[error("every generation for `{annotation_id}` was dropped: {}", .dropped.iter().map(|d| d.reason.as_str()).collect::<Vec<_>>().join("; "))]
    GenerationFailed { annotation_id: String, dropped: Vec<DroppedGeneration> },
    #[error("sample size {sample} exceeds population {population}")]
    SampleTooLarge { sample: usize, population: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Context shown to the generator, drawn from the annotation's own series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub theme_text: String,
    pub characters: Vec<CharacterProfile>,
    pub subtitles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub annotation: Annotation,
    pub context: GenerationContext,
    pub target_formats: Vec<QuestionFormat>,
    pub distractor_count: usize,
}

impl GenerationRequest {
    /// Builds the request with subtitles overlapping the annotated spans
    /// and the referenced characters (all characters when none are named).
    pub fn from_corpus(
        annotation: Annotation,
        corpus: &SeriesCorpus,
        target_formats: Vec<QuestionFormat>,
        distractor_count: usize,
    ) -> Result<Self, TransformError> {
        let missing = || TransformError::MissingEpisode {
            id: annotation.id.clone(),
            series_id: annotation.series_id.clone(),
            episode_index: annotation.episode_index,
        };
        let series = corpus.series(&annotation.series_id).ok_or_else(missing)?;
        let episode = series.episode(annotation.episode_index).ok_or_else(missing)?;
        let subtitles = episode
            .subtitles
            .iter()
            .filter(|c| annotation.time_spans.iter().any(|[s, e]| c.start_s <= *e && c.end_s >= *s))
            .map(|c| {
                let who = c.speaker.as_deref().map(|s| format!("{s}: ")).unwrap_or_default();
                format!("[{}-{}] {who}{}", format_time(c.start_s), format_time(c.end_s), c.text)
            })
            .collect();
        let characters = if annotation.character_refs.is_empty() {
            series.characters.clone()
        } else {
            series
                .characters
                .iter()
                .filter(|c| annotation.character_refs.iter().any(|r| r.eq_ignore_ascii_case(&c.name)))
                .cloned()
                .collect()
        };
        let req = Self {
            annotation,
            context: GenerationContext { theme_text: series.theme_text.clone(), characters, subtitles },
            target_formats,
            distractor_count,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if !(1..=4).contains(&self.distractor_count) {
            return Err(TransformError::DistractorCount(self.distractor_count));
        }
        if self.target_formats.is_empty() {
            return Err(TransformError::NoFormats);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Minimum share of answer tokens found in the statement.
    pub min_overlap: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { min_overlap: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedGeneration {
    pub format: QuestionFormat,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub questions: Vec<Question>,
    pub dropped: Vec<DroppedGeneration>,
}

fn format_code(f: QuestionFormat) -> &'static str {
    match f {
        QuestionFormat::Multichoice => "mc",
        QuestionFormat::Judgment => "tf",
        QuestionFormat::OpenEnded => "oe",
    }
}

fn rules_and_layout(format: QuestionFormat, distractors: usize) -> (String, String) {
    match format {
        QuestionFormat::Multichoice => {
            let labels: Vec<String> = (0..=distractors).map(crate::datamodel::option_label).collect();
            (
                format!("Give exactly {} options: one correct answer and {distractors} distractors.", distractors + 1),
                labels
                    .iter()
                    .map(|l| format!("{l}. <option>"))
                    .chain(["Answer: <letter>".to_string()])
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        }
        QuestionFormat::Judgment => (
            "Write a statement that is either true or false given the annotation.".to_string(),
            "Answer: True or False".to_string(),
        ),
        QuestionFormat::OpenEnded => {
            ("The reference answer must be one concise sentence.".to_string(), "Answer: <reference answer>".to_string())
        }
    }
}

/// Renders the generation prompt for one format.
pub fn generation_prompt(
    req: &GenerationRequest,
    format: QuestionFormat,
    templates: &TemplateSet,
) -> Result<String, TransformError> {
    let (rules, layout) = rules_and_layout(format, req.distractor_count);
    let chars: Vec<String> = req
        .context
        .characters
        .iter()
        .map(|c| if c.description.is_empty() { c.name.clone() } else { format!("{} ({})", c.name, c.description) })
        .collect();
    let subtitles =
        if req.context.subtitles.is_empty() { "(none)".to_string() } else { req.context.subtitles.join("\n") };
    let kind = match format {
        QuestionFormat::Multichoice => "multiple-choice",
        QuestionFormat::Judgment => "true/false judgment",
        QuestionFormat::OpenEnded => "open-ended",
    };
    let summary = if req.annotation.event_summary.is_empty() { "(none)" } else { &req.annotation.event_summary };
    Ok(templates.render(
        "generate",
        &[
            ("theme", &req.context.theme_text),
            ("characters", &chars.join("; ")),
            ("subtitles", &subtitles),
            ("statement", &req.annotation.declarative_statement),
            ("summary", summary),
            ("subtask", &req.annotation.subtask),
            ("format", kind),
            ("format_rules", &rules),
            ("layout", &layout),
        ],
    )?)
}

fn stem_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:\*\*)?(?:question|statement)(?:\*\*)?\s*[:：]\s*(.+)$").unwrap())
}

fn option_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\(?([A-E])[.):\]]\s+(.+)$").unwrap())
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:\*\*)?(?:correct\s+)?answer(?:\*\*)?\s*[:：]\s*(.+)$").unwrap())
}

fn letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\(?([A-E])\b").unwrap())
}

/// A parsed generation block before it becomes a [`Question`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBlock {
    pub stem: String,
    pub options: Vec<ChoiceOption>,
    pub answer: AnswerKey,
}

/// Reads `Question:`, lettered options and `Answer:` lines.
pub fn parse_generated(raw: &str, format: QuestionFormat, distractors: usize) -> Result<GeneratedBlock, String> {
    let mut stem = None;
    let mut options = Vec::new();
    let mut answer = None;
    for line in raw.lines() {
        if let Some(c) = answer_re().captures(line) {
            answer.get_or_insert_with(|| c[1].trim().to_string());
        } else if let Some(c) = stem_re().captures(line) {
            stem.get_or_insert_with(|| c[1].trim().to_string());
        } else if let Some(c) = option_re().captures(line) {
            options.push(ChoiceOption::new(&c[1], c[2].trim()));
        }
    }
    let stem = stem.filter(|s| !s.is_empty()).ok_or("no question stem")?;
    let answer = answer.filter(|s| !s.is_empty()).ok_or("no answer key")?;
    match format {
        QuestionFormat::Multichoice => {
            if options.len() != distractors + 1 {
                return Err(format!("expected {} options, got {}", distractors + 1, options.len()));
            }
            let label = letter_re().captures(&answer).map(|c| c[1].to_string()).ok_or("no answer key")?;
            if !options.iter().any(|o| o.label == label) {
                return Err(format!("answer key `{label}` is not an option"));
            }
            Ok(GeneratedBlock { stem, options, answer: AnswerKey::label(label) })
        }
        QuestionFormat::Judgment => {
            let lower = answer.to_lowercase();
            let verdict = if lower.starts_with("true") || answer.starts_with("正确") {
                JUDGMENT_TRUE
            } else if lower.starts_with("false") || answer.starts_with("错误") {
                JUDGMENT_FALSE
            } else {
                return Err("no answer key".to_string());
            };
            let options = judgment_options();
            let label = options.iter().find(|o| o.text == verdict).map(|o| o.label.clone()).unwrap_or_default();
            Ok(GeneratedBlock { stem, options, answer: AnswerKey::label(label) })
        }
        QuestionFormat::OpenEnded => {
            Ok(GeneratedBlock { stem, options: Vec::new(), answer: AnswerKey::reference(answer) })
        }
    }
}

/// Share of the text's tokens that also occur in the statement.
pub fn statement_overlap(text: &str, statement: &str) -> f64 {
    let tok = Tokenizer::default();
    let words = tok.tokenize(text);
    if words.is_empty() {
        return 0.0;
    }
    let source: HashSet<String> = tok.tokenize(statement).into_iter().collect();
    words.iter().filter(|w| source.contains(*w)).count() as f64 / words.len() as f64
}

fn faithful_text(q: &Question) -> &str {
    match q.format {
        QuestionFormat::Judgment => &q.stem,
        _ => q.answer_text().unwrap_or(""),
    }
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Generates one question per requested format; invalid outputs are
/// dropped with a reason. Fails only when nothing survives.
pub fn generate_tasks(
    req: &GenerationRequest,
    client: &Client,
    templates: &TemplateSet,
    taxonomy: &TaskTaxonomy,
    cfg: &TransformConfig,
) -> Result<GenerationOutcome, TransformError> {
    req.validate()?;
    let bad = annotation_violations(&req.annotation, taxonomy);
    if !bad.is_empty() {
        return Err(TransformError::InvalidAnnotation { id: req.annotation.id.clone(), violations: bad });
    }
    let ann = &req.annotation;
    let results = req
        .target_formats
        .par_iter()
        .map(|&format| -> Result<Result<Question, DroppedGeneration>, TransformError> {
            let prompt = generation_prompt(req, format, templates)?;
            let request = client.request(vec![ContentPart::text(&prompt)]).with_meta(Some(&ann.id), Stage::Generate);
            let raw = client.chat(&request)?.text;
            let drop = |reason: String| DroppedGeneration { format, reason, raw: raw.clone() };
            let block = match parse_generated(&raw, format, req.distractor_count) {
                Ok(b) => b,
                Err(reason) => return Ok(Err(drop(reason))),
            };
            let q = Question {
                id: format!("{}-{}", ann.id, format_code(format)),
                series_id: ann.series_id.clone(),
                episode_index: ann.episode_index,
                subtask: ann.subtask.clone(),
                format,
                stem: block.stem,
                options: block.options,
                answer: block.answer,
                split: None,
                provenance: Some(Provenance { annotation_id: ann.id.clone(), prompt_digest: digest(&prompt) }),
            };
            let violations = question_violations(&q, taxonomy, &q.id);
            if let Some(v) = violations.first() {
                return Ok(Err(drop(v.message.clone())));
            }
            let overlap = statement_overlap(faithful_text(&q), &ann.declarative_statement);
            if overlap < cfg.min_overlap {
                return Ok(Err(drop(format!(
                    "answer overlaps the statement by {overlap:.2} < {:.2}",
                    cfg.min_overlap
                ))));
            }
            Ok(Ok(q))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = GenerationOutcome::default();
    for r in results {
        match r {
            Ok(q) => out.questions.push(q),
            Err(d) => {
                log::warn!("{}: dropped {} generation: {}", ann.id, d.format, d.reason);
                out.dropped.push(d);
            }
        }
    }
    if out.questions.is_empty() {
        return Err(TransformError::GenerationFailed { annotation_id: ann.id.clone(), dropped: out.dropped });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditItem {
    pub question_id: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub population: usize,
    pub seed: u64,
    pub items: Vec<AuditItem>,
    pub passed: usize,
    pub pass_rate: f64,
}

/// Seeded sample of `sample_size` questions, judged by `checker`. Items
/// keep population order.
pub fn quality_sample(
    questions: &[Question],
    sample_size: usize,
    seed: u64,
    checker: impl Fn(&Question) -> bool,
) -> Result<AuditReport, TransformError> {
    if sample_size > questions.len() {
        return Err(TransformError::SampleTooLarge { sample: sample_size, population: questions.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, questions.len(), sample_size).into_vec();
    idx.sort_unstable();
    let items: Vec<AuditItem> = idx
        .iter()
        .map(|&i| AuditItem { question_id: questions[i].id.clone(), passed: checker(&questions[i]) })
        .collect();
    let passed = items.iter().filter(|i| i.passed).count();
    Ok(AuditReport {
        population: questions.len(),
        seed,
        pass_rate: if items.is_empty() { 0.0 } else { passed as f64 / items.len() as f64 },
        passed,
        items,
    })
}

/// Passes questions without datamodel violations.
pub fn structural_checker(taxonomy: &TaskTaxonomy) -> impl Fn(&Question) -> bool + '_ {
    move |q| question_violations(q, taxonomy, &q.id).is_empty()
}

/// Passes questions a reviewer marked `true`; unlisted questions fail.
pub fn verdict_checker(verdicts: BTreeMap<String, bool>) -> impl Fn(&Question) -> bool {
    move |q| verdicts.get(&q.id).copied().unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_four_option_block() {
        let raw = "Question: Who inspected the quilts?\nA. Sima Yi\nB. The director\nC. Lin Mo\nD. Nobody\nAnswer: B";
        let b = parse_generated(raw, QuestionFormat::Multichoice, 3).unwrap();
        assert_eq!(b.options.len(), 4);
        assert_eq!(b.answer, AnswerKey::label("B"));
    }

    #[test]
    fn missing_answer_is_reported() {
        let raw = "Question: Who inspected the quilts?\nA. Sima Yi\nB. The director";
        assert_eq!(parse_generated(raw, QuestionFormat::Multichoice, 1).unwrap_err(), "no answer key");
        assert_eq!(parse_generated("Question: x", QuestionFormat::OpenEnded, 1).unwrap_err(), "no answer key");
    }

    #[test]
    fn judgment_maps_to_pair() {
        let b =
            parse_generated("Statement: The manager was scared.\nAnswer: False", QuestionFormat::Judgment, 1).unwrap();
        assert_eq!(b.options, judgment_options());
        let key = b.answer.label.unwrap();
        assert_eq!(b.options.iter().find(|o| o.label == key).unwrap().text, JUDGMENT_FALSE);
    }

    #[test]
    fn overlap_is_token_share() {
        assert!((statement_overlap("the spider", "a spider scared the manager") - 1.0).abs() < 1e-12);
        assert!((statement_overlap("the cat", "a spider scared the manager") - 0.5).abs() < 1e-12);
    }
}

//! Evaluation prompt assembly: frames, subtitles, theme and characters,
//! instruction and question, in that order.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::backend::{ChatRequest, ContentPart};
use crate::datamodel::{Episode, Question, QuestionFormat, Series, SeriesCorpus, STUB_PREFIX};
use crate::templates::{TemplateError, TemplateSet};

pub const FRAMES_HEADER: &str = "## Frames";
pub const SUBTITLES_HEADER: &str = "## Subtitles";
pub const THEME_HEADER: &str = "## Theme and Characters";
pub const INSTRUCTION_HEADER: &str = "## Instruction";
pub const QUESTION_HEADER: &str = "## Question";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("question `{question_id}` references missing episode {series_id}#{episode_index}")]
    MissingEpisode { question_id: String, series_id: String, episode_index: u32 },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid modality set `{0}`: expected a comma list of Q, F, S, TC including Q")]
    Modalities(String),
    #[error("invalid episode window `{0}`: expected none, prev_1, prev_2, next_1 or next_2")]
    Window(String),
}

/// Which context sections accompany the question. The question is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalitySet {
    pub frames: bool,
    pub subtitles: bool,
    pub theme_chara: bool,
}

impl ModalitySet {
    pub const QUESTION_ONLY: ModalitySet = ModalitySet { frames: false, subtitles: false, theme_chara: false };
    pub const ALL: ModalitySet = ModalitySet { frames: true, subtitles: true, theme_chara: true };

    /// Every subset, in a fixed order.
    pub fn all_subsets() -> Vec<ModalitySet> {
        (0..8u8).map(|b| ModalitySet { frames: b & 1 != 0, subtitles: b & 2 != 0, theme_chara: b & 4 != 0 }).collect()
    }
}

impl Default for ModalitySet {
    fn default() -> Self {
        ModalitySet { frames: true, subtitles: true, theme_chara: false }
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = vec!["Q"];
        if self.frames {
            parts.push("F");
        }
        if self.subtitles {
            parts.push("S");
        }
        if self.theme_chara {
            parts.push("TC");
        }
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ModalitySet {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = ModalitySet::QUESTION_ONLY;
        let mut has_q = false;
        for tok in s.split([',', '+', ' ']).filter(|t| !t.is_empty()) {
            match tok.to_ascii_uppercase().as_str() {
                "Q" => has_q = true,
                "F" => set.frames = true,
                "S" => set.subtitles = true,
                "TC" => set.theme_chara = true,
                _ => return Err(PromptError::Modalities(s.to_string())),
            }
        }
        if !has_q {
            return Err(PromptError::Modalities(s.to_string()));
        }
        Ok(set)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Neighbouring episodes added around the target episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum EpisodeWindow {
    #[default]
    None,
    Prev(u8),
    Next(u8),
}

impl fmt::Display for EpisodeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeWindow::None => f.write_str("none"),
            EpisodeWindow::Prev(i) => write!(f, "prev_{i}"),
            EpisodeWindow::Next(i) => write!(f, "next_{i}"),
        }
    }
}

impl FromStr for EpisodeWindow {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        let parsed = match norm.as_str() {
            "none" | "" => Some(EpisodeWindow::None),
            other => {
                let (dir, n) = other.split_at(other.len().saturating_sub(1));
                let n: Option<u8> = n.parse().ok().filter(|n| (1..=2).contains(n));
                match (dir.trim_end_matches('_'), n) {
                    ("prev", Some(n)) => Some(EpisodeWindow::Prev(n)),
                    ("next", Some(n)) => Some(EpisodeWindow::Next(n)),
                    _ => None,
                }
            }
        };
        parsed.ok_or_else(|| PromptError::Window(s.to_string()))
    }
}

impl Serialize for EpisodeWindow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EpisodeWindow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub modalities: ModalitySet,
    pub window: EpisodeWindow,
    /// Total frames across all included episodes.
    pub frame_budget: usize,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self { modalities: ModalitySet::default(), window: EpisodeWindow::None, frame_budget: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Frames,
    Subtitles,
    ThemeChara,
    Instruction,
    Question,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    pub request: ChatRequest,
    pub sections: Vec<SectionKind>,
    /// Episode indices included, in order.
    pub episodes: Vec<u32>,
    /// The window asked for more episodes than the series has.
    pub window_truncated: bool,
}

/// Resolves a manifest image reference against the corpus root.
pub fn resolve_image(root: &Path, image_ref: &str) -> String {
    if image_ref.starts_with(STUB_PREFIX) || Path::new(image_ref).is_absolute() || root.as_os_str().is_empty() {
        image_ref.to_string()
    } else {
        root.join(image_ref).to_string_lossy().into_owned()
    }
}

pub fn format_instruction(format: QuestionFormat) -> &'static str {
    match format {
        QuestionFormat::Multichoice => "Answer with the letter of the correct option, for example (A).",
        QuestionFormat::Judgment => "Decide whether the statement is true or false and answer (A) True or (B) False.",
        QuestionFormat::OpenEnded => "Answer the question in one or two sentences.",
    }
}

/// Stem plus labelled options.
pub fn question_block(q: &Question) -> String {
    let mut s = format!("{QUESTION_HEADER}\n{}", q.stem);
    for o in &q.options {
        s.push_str(&format!("\n({}) {}", o.label, o.text));
    }
    s
}

pub fn format_time(t: f64) -> String {
    format!("{t:.2}s")
}

pub fn subtitle_lines(ep: &Episode) -> String {
    ep.subtitles
        .iter()
        .map(|c| match &c.speaker {
            Some(sp) => format!("[{}-{}] {sp}: {}", format_time(c.start_s), format_time(c.end_s), c.text),
            None => format!("[{}-{}] {}", format_time(c.start_s), format_time(c.end_s), c.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn theme_block(series: &Series) -> String {
    let mut s = format!("{THEME_HEADER}\nTheme: {}\nCharacters:", series.theme_text);
    for c in &series.characters {
        if c.description.is_empty() {
            s.push_str(&format!("\n- {}", c.name));
        } else {
            s.push_str(&format!("\n- {}: {}", c.name, c.description));
        }
    }
    s
}

/// Episodes covered by a window around `target`, and whether it was cut short.
pub fn window_episodes(series: &Series, target: u32, window: EpisodeWindow) -> (Vec<u32>, bool) {
    let exists = |i: u32| series.episode(i).is_some();
    match window {
        EpisodeWindow::None => (vec![target], false),
        EpisodeWindow::Prev(n) => {
            let want: Vec<u32> =
                (1..=u32::from(n)).rev().filter_map(|d| target.checked_sub(d)).filter(|&i| exists(i)).collect();
            let truncated = want.len() < usize::from(n);
            (want.into_iter().chain([target]).collect(), truncated)
        }
        EpisodeWindow::Next(n) => {
            let want: Vec<u32> = (1..=u32::from(n)).map(|d| target + d).filter(|&i| exists(i)).collect();
            let truncated = want.len() < usize::from(n);
            (std::iter::once(target).chain(want).collect(), truncated)
        }
    }
}

/// Splits `budget` evenly over `n` slots; the remainder goes to the first slots.
pub fn split_budget(budget: usize, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    (0..n).map(|i| budget / n + usize::from(i < budget % n)).collect()
}

/// Builds the evaluation request for `question` under `spec`.
pub fn assemble_prompt(
    question: &Question,
    corpus: &SeriesCorpus,
    spec: &PromptSpec,
    templates: &TemplateSet,
    model_id: &str,
) -> Result<AssembledPrompt, PromptError> {
    let missing = || PromptError::MissingEpisode {
        question_id: question.id.clone(),
        series_id: question.series_id.clone(),
        episode_index: question.episode_index,
    };
    let series = corpus.series(&question.series_id).ok_or_else(missing)?;
    series.episode(question.episode_index).ok_or_else(missing)?;
    let (episodes, window_truncated) = window_episodes(series, question.episode_index, spec.window);
    let multi = episodes.len() > 1 || spec.window != EpisodeWindow::None;
    let eps: Vec<&Episode> = episodes.iter().filter_map(|&i| series.episode(i)).collect();

    let mut parts = Vec::new();
    let mut sections = Vec::new();

    if spec.modalities.frames {
        sections.push(SectionKind::Frames);
        parts.push(ContentPart::text(FRAMES_HEADER));
        for (ep, budget) in eps.iter().zip(split_budget(spec.frame_budget, eps.len())) {
            let picked = ep.frames.uniform_sample(budget);
            let times: Vec<String> = picked.iter().map(|f| format_time(f.timestamp_s)).collect();
            parts.push(ContentPart::text(format!("Episode {} frames at {}", ep.index, times.join(", "))));
            for f in picked {
                parts.push(ContentPart::image(resolve_image(&corpus.root_path, &f.image_ref)));
            }
        }
    }
    if spec.modalities.subtitles {
        sections.push(SectionKind::Subtitles);
        let mut s = SUBTITLES_HEADER.to_string();
        for ep in &eps {
            s.push_str(&format!("\nEpisode {}:\n{}", ep.index, subtitle_lines(ep)));
        }
        parts.push(ContentPart::text(s));
    }
    if spec.modalities.theme_chara {
        sections.push(SectionKind::ThemeChara);
        parts.push(ContentPart::text(theme_block(series)));
    }
    sections.push(SectionKind::Instruction);
    let fi = format_instruction(question.format);
    let instruction = if multi {
        templates
            .render("multi_episode", &[("target", &question.episode_index.to_string()), ("format_instruction", fi)])?
    } else {
        templates.render("evaluate", &[("format_instruction", fi)])?
    };
    parts.push(ContentPart::text(format!("{INSTRUCTION_HEADER}\n{instruction}")));
    sections.push(SectionKind::Question);
    parts.push(ContentPart::text(question_block(question)));

    let request = ChatRequest::new(model_id, parts).with_meta(Some(&question.id), crate::backend::Stage::Answer);
    Ok(AssembledPrompt { request, sections, episodes, window_truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_parse_roundtrip() {
        for m in ModalitySet::all_subsets() {
            assert_eq!(m.to_string().parse::<ModalitySet>().unwrap(), m);
        }
        assert!("F,S".parse::<ModalitySet>().is_err());
        assert!("Q,X".parse::<ModalitySet>().is_err());
    }

    #[test]
    fn window_parse() {
        assert_eq!("Prev_1".parse::<EpisodeWindow>().unwrap(), EpisodeWindow::Prev(1));
        assert_eq!("next_2".parse::<EpisodeWindow>().unwrap(), EpisodeWindow::Next(2));
        assert_eq!("none".parse::<EpisodeWindow>().unwrap(), EpisodeWindow::None);
        assert!("prev_3".parse::<EpisodeWindow>().is_err());
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(32, 3), vec![11, 11, 10]);
        assert_eq!(split_budget(32, 1), vec![32]);
    }
}

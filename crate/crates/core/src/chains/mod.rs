//! Dual-chain reasoning: target extraction, the plot event chain, the
//! character temporal chain and their interval-overlap synthesis.

mod build;
mod extract;
mod pipeline;
mod synth;

pub use build::{build_character_temporal_chain, build_plot_event_chain, EventSegments};
pub use extract::{extract_targets, extraction_prompt, parse_extraction, resolve_characters};
pub use pipeline::{answer_plain, answer_with_pcdcot};
pub use synth::{
    participates, participation_matrix, render_alignment_section, render_character_section, render_event_section,
    split_sections, synthesize_dual_chain, ALIGNMENT_SECTION, CHARACTER_SECTION, EVENT_SECTION, NARRATIVE_SECTION,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

use crate::backend::{BackendError, Client, ContentPart, Stage};
use crate::datamodel::SeriesCorpus;
use crate::prompt::{PromptError, PromptSpec};
use crate::retrieval::{Interval, RetrievalConfig, RetrievalError};
use crate::templates::{TemplateError, TemplateSet};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("could not parse extraction output: {raw:?}")]
    ExtractionFailed { raw: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Which chain, if any, is left out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Without the character temporal chain.
    NoChaTemp,
    /// Without the plot event chain.
    NoPlotEvent,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoChaTemp => "no_cha_temp",
            Ablation::NoPlotEvent => "no_plot_event",
        })
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(Ablation::None),
            "no_cha_temp" | "wo_cha_temp" => Ok(Ablation::NoChaTemp),
            "no_plot_event" | "wo_plot_event" => Ok(Ablation::NoPlotEvent),
            _ => Err(format!("unknown ablation `{s}`: expected none, no_cha_temp or no_plot_event")),
        }
    }
}

/// One aggregation call per event node, or one call for the whole chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    #[default]
    PerEvent,
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub retrieval: RetrievalConfig,
    /// Frames sent with each describe prompt.
    pub frames_per_node: usize,
    /// Frames sent with the extraction prompt.
    pub extract_frames: usize,
    pub synthesis: SynthesisMode,
    pub ablation: Ablation,
    /// Add the episode subtitles to the final answer prompt.
    pub include_subtitles: bool,
    /// Extra attempts for a failed describe call.
    pub node_retries: u32,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            frames_per_node: 8,
            extract_frames: 16,
            synthesis: SynthesisMode::PerEvent,
            ablation: Ablation::None,
            include_subtitles: false,
            node_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub events: Vec<String>,
    /// Sheet names where resolvable, otherwise the extracted text.
    pub characters: Vec<String>,
    /// Characters that matched no sheet entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventChainNode {
    pub event_id: String,
    pub event_text: String,
    pub description: String,
    pub interval: Interval,
    pub source_frames: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterChainNode {
    pub character: String,
    pub description: String,
    pub appearance_times: Vec<f64>,
    pub source_frames: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualChainNode {
    pub event: EventChainNode,
    pub participants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesized: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualChainResult {
    pub nodes: Vec<DualChainNode>,
    /// Single synthesized account for batched or character-only synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
    /// Aggregation prompts, in issue order.
    pub prompts: Vec<String>,
    pub answer_prompt: String,
    pub final_answer: String,
    /// Both chains were empty and the plain evaluation prompt was used.
    pub plain_fallback: bool,
}

/// Everything a pipeline run needs besides the question itself.
pub struct ChainContext<'a> {
    pub client: &'a Client,
    pub templates: &'a TemplateSet,
    pub corpus: &'a SeriesCorpus,
    pub cfg: &'a ChainConfig,
    /// Prompt settings for the plain fallback.
    pub plain: PromptSpec,
    all_cached: AtomicBool,
}

impl<'a> ChainContext<'a> {
    pub fn new(client: &'a Client, templates: &'a TemplateSet, corpus: &'a SeriesCorpus, cfg: &'a ChainConfig) -> Self {
        Self { client, templates, corpus, cfg, plain: PromptSpec::default(), all_cached: AtomicBool::new(true) }
    }

    pub fn with_plain(mut self, plain: PromptSpec) -> Self {
        self.plain = plain;
        self
    }

    /// Whether every chat call so far was a cache hit.
    pub fn all_cached(&self) -> bool {
        self.all_cached.load(Ordering::SeqCst)
    }

    /// Chat call tagged with question id and stage. Returns the prompt text and reply.
    pub fn chat(
        &self,
        parts: Vec<ContentPart>,
        question_id: &str,
        stage: Stage,
    ) -> Result<(String, String), BackendError> {
        let req = self.client.request(parts).with_meta(Some(question_id), stage);
        let reply = self.client.chat(&req)?;
        if !reply.cache_hit {
            self.all_cached.store(false, Ordering::SeqCst);
        }
        Ok((req.prompt_text(), reply.text))
    }

    fn chat_retrying(
        &self,
        parts: Vec<ContentPart>,
        question_id: &str,
        stage: Stage,
    ) -> Result<(String, String), BackendError> {
        let mut attempt = 0;
        loop {
            match self.chat(parts.clone(), question_id, stage) {
                Ok(r) => return Ok(r),
                Err(e) if attempt < self.cfg.node_retries => {
                    log::warn!("{stage} call for {question_id} failed ({e}); retrying");
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

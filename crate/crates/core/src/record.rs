//! Per-question evaluation outcome, including the dual-chain audit trail.

use serde::{Deserialize, Serialize};

use crate::backend::Stage;
use crate::chains::{CharacterChainNode, DualChainResult, EventChainNode, ExtractionResult};
use crate::datamodel::QuestionFormat;
use crate::metrics::{MetricScores, ParsedChoice};
use crate::retrieval::{CharacterTrack, EventSegment};

/// Pipeline step, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Extract,
    Retrieve,
    EventChain,
    CharacterChain,
    Synthesize,
    Answer,
}

impl PipelineStage {
    pub fn backend_stage(self) -> Stage {
        match self {
            PipelineStage::Extract => Stage::Extract,
            PipelineStage::Retrieve | PipelineStage::EventChain => Stage::DescribeEvent,
            PipelineStage::CharacterChain => Stage::DescribeCharacter,
            PipelineStage::Synthesize => Stage::Aggregate,
            PipelineStage::Answer => Stage::Answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRetrievalArtifact {
    pub event_id: String,
    pub text: String,
    pub segments: Vec<EventSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageArtifact {
    Extract {
        prompt: String,
        raw: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result: Option<ExtractionResult>,
    },
    Retrieve {
        events: Vec<EventRetrievalArtifact>,
        tracks: Vec<CharacterTrack>,
    },
    EventChain {
        nodes: Vec<EventChainNode>,
    },
    CharacterChain {
        nodes: Vec<CharacterChainNode>,
    },
    Synthesize {
        result: DualChainResult,
    },
    Answer {
        prompt: String,
        raw: String,
    },
}

impl StageArtifact {
    pub fn stage(&self) -> PipelineStage {
        match self {
            StageArtifact::Extract { .. } => PipelineStage::Extract,
            StageArtifact::Retrieve { .. } => PipelineStage::Retrieve,
            StageArtifact::EventChain { .. } => PipelineStage::EventChain,
            StageArtifact::CharacterChain { .. } => PipelineStage::CharacterChain,
            StageArtifact::Synthesize { .. } => PipelineStage::Synthesize,
            StageArtifact::Answer { .. } => PipelineStage::Answer,
        }
    }
}

/// A step toward a simpler pipeline taken because an input was empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degradation {
    /// Extraction output could not be parsed.
    ExtractionUnparsed,
    NoEvents,
    NoCharacters,
    EmptyEventChain,
    EmptyCharacterChain,
    /// Both chains empty; answered with the plain evaluation prompt.
    PlainFallback,
    /// Episode window cut at a series boundary.
    WindowTruncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: PipelineStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerOutcome {
    Choice {
        parsed: ParsedChoice,
        correct: bool,
    },
    Open {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scores: Option<MetricScores>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub subtask: String,
    pub format: QuestionFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<AnswerOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageArtifact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degradations: Vec<Degradation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
    /// Every model call of this record was served from the cache.
    pub cache_hit: bool,
    /// Wall time; not serialized so records stay reproducible.
    #[serde(skip)]
    pub elapsed_ms: u64,
}

impl EvalRecord {
    pub fn new(question_id: &str, subtask: &str, format: QuestionFormat) -> Self {
        Self {
            question_id: question_id.to_string(),
            subtask: subtask.to_string(),
            format,
            raw_response: None,
            outcome: None,
            stages: Vec::new(),
            degradations: Vec::new(),
            error: None,
            cache_hit: true,
            elapsed_ms: 0,
        }
    }

    pub fn is_success(&self) -> bool {
        self.error.is_none() && self.outcome.is_some()
    }

    pub fn fail(&mut self, stage: PipelineStage, message: impl Into<String>) {
        self.error = Some(StageError { stage, message: message.into() });
    }

    pub fn degrade(&mut self, d: Degradation) {
        if !self.degradations.contains(&d) {
            self.degradations.push(d);
        }
    }

    pub fn stage_order(&self) -> Vec<PipelineStage> {
        self.stages.iter().map(StageArtifact::stage).collect()
    }

    pub fn artifact(&self, stage: PipelineStage) -> Option<&StageArtifact> {
        self.stages.iter().find(|a| a.stage() == stage)
    }

    pub fn parsed_choice(&self) -> Option<&ParsedChoice> {
        match &self.outcome {
            Some(AnswerOutcome::Choice { parsed, .. }) => Some(parsed),
            _ => None,
        }
    }

    pub fn open_text(&self) -> Option<&str> {
        match &self.outcome {
            Some(AnswerOutcome::Open { text, .. }) => Some(text),
            _ => None,
        }
    }

    pub fn is_correct(&self) -> Option<bool> {
        match &self.outcome {
            Some(AnswerOutcome::Choice { correct, .. }) => Some(*correct),
            _ => None,
        }
    }
}

use std::time::Instant;

use super::{
    build_character_temporal_chain, build_plot_event_chain, extract_targets, synthesize_dual_chain, Ablation,
    ChainContext, ChainError, EventSegments,
};
use crate::datamodel::{CharacterProfile, Question};
use crate::metrics::{is_correct, parse_choice};
use crate::prompt::{assemble_prompt, resolve_image, PromptSpec};
use crate::record::{AnswerOutcome, Degradation, EvalRecord, EventRetrievalArtifact, PipelineStage, StageArtifact};
use crate::retrieval::FrameIndex;

fn set_answer(rec: &mut EvalRecord, question: &Question, raw: String) {
    rec.outcome = Some(if question.format.is_choice() {
        let parsed = parse_choice(&raw, &question.options);
        let correct = is_correct(&parsed, &question.answer);
        AnswerOutcome::Choice { parsed, correct }
    } else {
        AnswerOutcome::Open { text: raw.trim().to_string(), scores: None }
    });
    rec.raw_response = Some(raw);
}

fn plain_into(rec: &mut EvalRecord, question: &Question, spec: &PromptSpec, ctx: &ChainContext<'_>) {
    let assembled = match assemble_prompt(question, ctx.corpus, spec, ctx.templates, &ctx.client.chat_model) {
        Ok(a) => a,
        Err(e) => return rec.fail(PipelineStage::Answer, e.to_string()),
    };
    if assembled.window_truncated {
        rec.degrade(Degradation::WindowTruncated);
    }
    let prompt = assembled.request.prompt_text();
    match ctx.client.chat(&assembled.request) {
        Ok(reply) => {
            rec.cache_hit &= reply.cache_hit;
            rec.stages.push(StageArtifact::Answer { prompt, raw: reply.text.clone() });
            set_answer(rec, question, reply.text);
        }
        Err(e) => rec.fail(PipelineStage::Answer, e.to_string()),
    }
}

/// Answers with the plain evaluation prompt.
pub fn answer_plain(question: &Question, spec: &PromptSpec, ctx: &ChainContext<'_>) -> EvalRecord {
    let start = Instant::now();
    let mut rec = EvalRecord::new(&question.id, &question.subtask, question.format);
    plain_into(&mut rec, question, spec, ctx);
    rec.elapsed_ms = start.elapsed().as_millis() as u64;
    rec
}

/// Runs extraction, retrieval, both chains, synthesis and the final answer.
/// Every failure is recorded on the returned record with its stage.
pub fn answer_with_pcdcot(question: &Question, ctx: &ChainContext<'_>) -> EvalRecord {
    let start = Instant::now();
    let mut rec = EvalRecord::new(&question.id, &question.subtask, question.format);
    run(question, ctx, &mut rec);
    rec.cache_hit &= ctx.all_cached();
    rec.elapsed_ms = start.elapsed().as_millis() as u64;
    rec
}

fn fallback(rec: &mut EvalRecord, question: &Question, ctx: &ChainContext<'_>) {
    rec.degrade(Degradation::PlainFallback);
    plain_into(rec, question, &ctx.plain, ctx);
}

fn run(question: &Question, ctx: &ChainContext<'_>, rec: &mut EvalRecord) {
    let (Some(series), Some(episode)) =
        (ctx.corpus.series(&question.series_id), ctx.corpus.episode(&question.series_id, question.episode_index))
    else {
        return rec.fail(
            PipelineStage::Extract,
            format!("missing episode {}#{}", question.series_id, question.episode_index),
        );
    };

    let extraction = match extract_targets(question, series, episode, ctx) {
        Ok((prompt, raw, Ok(result))) => {
            rec.stages.push(StageArtifact::Extract { prompt, raw, result: Some(result.clone()) });
            result
        }
        Ok((prompt, raw, Err(e))) => {
            log::warn!("{}: {e}", question.id);
            rec.stages.push(StageArtifact::Extract { prompt, raw, result: None });
            rec.degrade(Degradation::ExtractionUnparsed);
            return fallback(rec, question, ctx);
        }
        Err(e) => return rec.fail(PipelineStage::Extract, e.to_string()),
    };

    if extraction.events.is_empty() {
        rec.degrade(Degradation::NoEvents);
    }
    if extraction.characters.is_empty() {
        rec.degrade(Degradation::NoCharacters);
    }
    let use_events = !extraction.events.is_empty() && ctx.cfg.ablation != Ablation::NoPlotEvent;
    let use_chars = !extraction.characters.is_empty() && ctx.cfg.ablation != Ablation::NoChaTemp;
    if !use_events && !use_chars {
        return fallback(rec, question, ctx);
    }

    let root = ctx.corpus.root_path.clone();
    let resolve = |r: &str| resolve_image(&root, r);
    let retrieved = (|| -> Result<_, ChainError> {
        let index = FrameIndex::build(&episode.frames, ctx.client, resolve)?;
        let events = if use_events {
            index.event_segments(&extraction.events, &ctx.cfg.retrieval, ctx.client)?
        } else {
            Vec::new()
        };
        let profiles: Vec<CharacterProfile> = extraction
            .characters
            .iter()
            .map(|n| {
                series.character(n).cloned().unwrap_or(CharacterProfile {
                    name: n.clone(),
                    description: String::new(),
                    portrait_ref: None,
                })
            })
            .collect();
        let tracks = if use_chars {
            index.character_tracks(&profiles, &ctx.cfg.retrieval, ctx.client, resolve)?
        } else {
            Vec::new()
        };
        Ok((events, tracks, profiles))
    })();
    let (events, tracks, profiles) = match retrieved {
        Ok(r) => r,
        Err(e) => return rec.fail(PipelineStage::Retrieve, e.to_string()),
    };
    let event_segments: Vec<EventSegments> = events
        .iter()
        .map(|e| EventSegments { event_id: e.event_id.clone(), text: e.text.clone(), segments: e.segments.clone() })
        .collect();
    let tracks: Vec<_> = tracks.into_iter().map(|c| c.track).collect();
    rec.stages.push(StageArtifact::Retrieve {
        events: event_segments
            .iter()
            .map(|e| EventRetrievalArtifact {
                event_id: e.event_id.clone(),
                text: e.text.clone(),
                segments: e.segments.clone(),
            })
            .collect(),
        tracks: tracks.clone(),
    });

    let mut event_nodes = Vec::new();
    if use_events {
        match build_plot_event_chain(&event_segments, &episode.frames, &question.id, ctx) {
            Ok(nodes) => {
                if nodes.is_empty() {
                    rec.degrade(Degradation::EmptyEventChain);
                }
                rec.stages.push(StageArtifact::EventChain { nodes: nodes.clone() });
                event_nodes = nodes;
            }
            Err(e) => return rec.fail(PipelineStage::EventChain, e.to_string()),
        }
    }
    let mut char_nodes = Vec::new();
    if use_chars {
        match build_character_temporal_chain(&tracks, &profiles, &episode.frames, &question.id, ctx) {
            Ok(nodes) => {
                if nodes.is_empty() {
                    rec.degrade(Degradation::EmptyCharacterChain);
                }
                rec.stages.push(StageArtifact::CharacterChain { nodes: nodes.clone() });
                char_nodes = nodes;
            }
            Err(e) => return rec.fail(PipelineStage::CharacterChain, e.to_string()),
        }
    }
    if event_nodes.is_empty() && char_nodes.is_empty() {
        return fallback(rec, question, ctx);
    }

    match synthesize_dual_chain(&event_nodes, &char_nodes, question, ctx) {
        Ok(result) => {
            let (prompt, raw) = (result.answer_prompt.clone(), result.final_answer.clone());
            rec.stages.push(StageArtifact::Synthesize { result });
            rec.stages.push(StageArtifact::Answer { prompt, raw: raw.clone() });
            set_answer(rec, question, raw);
        }
        Err(e) => rec.fail(PipelineStage::Synthesize, e.to_string()),
    }
}

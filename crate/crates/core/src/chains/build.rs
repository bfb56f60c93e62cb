use rayon::prelude::*;

use super::{ChainContext, ChainError, CharacterChainNode, EventChainNode};
use crate::backend::{ContentPart, Stage};
use crate::datamodel::{uniform_pick, CharacterProfile, FrameSequence};
use crate::prompt::{format_time, resolve_image};
use crate::retrieval::{CharacterTrack, EventSegment};

/// Retrieved segments for one extracted event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSegments {
    pub event_id: String,
    pub text: String,
    pub segments: Vec<EventSegment>,
}

fn frame_parts(ctx: &ChainContext<'_>, frames: &FrameSequence, indices: &[u32]) -> Vec<ContentPart> {
    uniform_pick(indices, ctx.cfg.frames_per_node)
        .into_iter()
        .filter_map(|&i| frames.get(i))
        .map(|f| ContentPart::image(resolve_image(&ctx.corpus.root_path, &f.image_ref)))
        .collect()
}

/// One node per nonempty segment, ordered by interval start.
pub fn build_plot_event_chain(
    events: &[EventSegments],
    frames: &FrameSequence,
    question_id: &str,
    ctx: &ChainContext<'_>,
) -> Result<Vec<EventChainNode>, ChainError> {
    let mut pending: Vec<(String, &str, &EventSegment)> = Vec::new();
    for ev in events {
        let live: Vec<&EventSegment> = ev.segments.iter().filter(|s| !s.frame_indices.is_empty()).collect();
        for (k, seg) in live.iter().enumerate() {
            let id = if live.len() == 1 { ev.event_id.clone() } else { format!("{}.{}", ev.event_id, k + 1) };
            pending.push((id, &ev.text, seg));
        }
    }
    pending.sort_by(|a, b| {
        a.2.interval
            .start_s
            .total_cmp(&b.2.interval.start_s)
            .then(a.2.interval.end_s.total_cmp(&b.2.interval.end_s))
            .then_with(|| a.0.cmp(&b.0))
    });
    pending
        .par_iter()
        .map(|(id, text, seg)| {
            let prompt = ctx.templates.render(
                "describe_event",
                &[
                    ("event", text),
                    ("start", &format_time(seg.interval.start_s)),
                    ("end", &format_time(seg.interval.end_s)),
                ],
            )?;
            let mut parts = vec![ContentPart::text(prompt)];
            parts.extend(frame_parts(ctx, frames, &seg.frame_indices));
            let (_, reply) = ctx.chat_retrying(parts, question_id, Stage::DescribeEvent)?;
            let reply = reply.trim();
            Ok(EventChainNode {
                event_id: id.clone(),
                event_text: text.to_string(),
                description: if reply.is_empty() { text.to_string() } else { reply.to_string() },
                interval: seg.interval,
                source_frames: seg.frame_indices.clone(),
            })
        })
        .collect()
}

/// One node per nonempty track, in the order given. Empty tracks are logged and skipped.
pub fn build_character_temporal_chain(
    tracks: &[CharacterTrack],
    profiles: &[CharacterProfile],
    frames: &FrameSequence,
    question_id: &str,
    ctx: &ChainContext<'_>,
) -> Result<Vec<CharacterChainNode>, ChainError> {
    for t in tracks.iter().filter(|t| t.is_empty()) {
        log::info!("{question_id}: character `{}` not found in any frame", t.character);
    }
    tracks
        .par_iter()
        .filter(|t| !t.is_empty())
        .map(|t| {
            let profile = profiles
                .iter()
                .find(|p| p.name == t.character)
                .map(|p| p.description.as_str())
                .filter(|d| !d.is_empty())
                .unwrap_or("not given");
            let times: Vec<String> = t.appearance_times.iter().map(|&s| format_time(s)).collect();
            let prompt = ctx.templates.render(
                "describe_character",
                &[("character", &t.character), ("times", &times.join(", ")), ("profile", profile)],
            )?;
            let mut parts = vec![ContentPart::text(prompt)];
            parts.extend(frame_parts(ctx, frames, &t.frame_indices));
            let (_, reply) = ctx.chat_retrying(parts, question_id, Stage::DescribeCharacter)?;
            let reply = reply.trim();
            Ok(CharacterChainNode {
                character: t.character.clone(),
                description: if reply.is_empty() { format!("{} appears.", t.character) } else { reply.to_string() },
                appearance_times: t.appearance_times.clone(),
                source_frames: t.frame_indices.clone(),
            })
        })
        .collect()
}

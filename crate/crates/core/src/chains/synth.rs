use rayon::prelude::*;

use super::{
    Ablation, ChainContext, ChainError, CharacterChainNode, DualChainNode, DualChainResult, EventChainNode,
    SynthesisMode,
};
use crate::backend::{ContentPart, Stage};
use crate::datamodel::Question;
use crate::prompt::{format_instruction, format_time, question_block, subtitle_lines, SUBTITLES_HEADER};
use crate::retrieval::Interval;

pub const EVENT_SECTION: &str = "## Plot Event Chain";
pub const CHARACTER_SECTION: &str = "## Character Temporal Chain";
pub const ALIGNMENT_SECTION: &str = "## Event-Character Alignment";
pub const NARRATIVE_SECTION: &str = "## Dual-Chain Narrative";

/// Whether any appearance time lies in the closed interval.
pub fn participates(interval: &Interval, appearance_times: &[f64]) -> bool {
    interval.hits_any(appearance_times)
}

/// `m[j][k]`: character `k` appears during event `j`.
pub fn participation_matrix(events: &[EventChainNode], characters: &[CharacterChainNode]) -> Vec<Vec<bool>> {
    events.iter().map(|e| characters.iter().map(|c| participates(&e.interval, &c.appearance_times)).collect()).collect()
}

pub fn render_event_section(nodes: &[&EventChainNode]) -> String {
    let mut s = EVENT_SECTION.to_string();
    for n in nodes {
        s.push_str(&format!(
            "\n[{}] {}-{} ({}): {}",
            n.event_id,
            format_time(n.interval.start_s),
            format_time(n.interval.end_s),
            n.event_text,
            one_line(&n.description)
        ));
    }
    s
}

pub fn render_character_section(nodes: &[&CharacterChainNode]) -> String {
    let mut s = CHARACTER_SECTION.to_string();
    for n in nodes {
        let times: Vec<String> = n.appearance_times.iter().map(|&t| format_time(t)).collect();
        s.push_str(&format!("\n[{}] at {}: {}", n.character, times.join(", "), one_line(&n.description)));
    }
    s
}

pub fn render_alignment_section(events: &[&EventChainNode], participants: &[Vec<String>]) -> String {
    let mut s = ALIGNMENT_SECTION.to_string();
    for (e, p) in events.iter().zip(participants) {
        let who = if p.is_empty() { "(none)".to_string() } else { p.join(", ") };
        s.push_str(&format!("\n[{}] {who}", e.event_id));
    }
    s
}

/// Splits a prompt into `## `-headed sections. A section runs from its
/// header to the next blank line.
pub fn split_sections(prompt: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in prompt.lines().chain([""]) {
        match current.as_mut() {
            Some(lines) if !line.is_empty() && !line.starts_with("## ") => lines.push(line),
            _ => {
                if let Some(lines) = current.take() {
                    out.push((lines[0].to_string(), lines.join("\n")));
                }
                if line.starts_with("## ") {
                    current = Some(vec![line]);
                }
            }
        }
    }
    out
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn aggregate(ctx: &ChainContext<'_>, sections: &[String], question_id: &str) -> Result<(String, String), ChainError> {
    let text = ctx.templates.render("aggregate", &[("sections", &sections.join("\n\n"))])?;
    Ok(ctx.chat_retrying(vec![ContentPart::text(text)], question_id, Stage::Aggregate)?)
}

/// Aggregates the chains by interval overlap and asks the final question.
///
/// Either chain may be empty. With both empty the result is marked as a
/// plain fallback and no model call is made; the caller answers with the
/// plain evaluation prompt.
pub fn synthesize_dual_chain(
    events: &[EventChainNode],
    characters: &[CharacterChainNode],
    question: &Question,
    ctx: &ChainContext<'_>,
) -> Result<DualChainResult, ChainError> {
    let use_events = !events.is_empty() && ctx.cfg.ablation != Ablation::NoPlotEvent;
    let use_chars = !characters.is_empty() && ctx.cfg.ablation != Ablation::NoChaTemp;
    if !use_events && !use_chars {
        return Ok(DualChainResult { plain_fallback: true, ..DualChainResult::default() });
    }
    let qid = question.id.as_str();
    let matrix = if use_chars { participation_matrix(events, characters) } else { vec![Vec::new(); events.len()] };
    let participants: Vec<Vec<String>> = matrix
        .iter()
        .map(|row| row.iter().zip(characters).filter(|(p, _)| **p).map(|(_, c)| c.character.clone()).collect())
        .collect();
    let all_chars: Vec<&CharacterChainNode> = if use_chars { characters.iter().collect() } else { Vec::new() };

    let mut result = DualChainResult::default();
    if !use_events {
        let (prompt, reply) = aggregate(ctx, &[render_character_section(&all_chars)], qid)?;
        result.prompts.push(prompt);
        result.narrative = Some(reply.trim().to_string());
    } else {
        result.nodes = events
            .iter()
            .zip(&participants)
            .map(|(e, p)| DualChainNode { event: e.clone(), participants: p.clone(), synthesized: None })
            .collect();
        match ctx.cfg.synthesis {
            SynthesisMode::PerEvent => {
                let replies = events
                    .par_iter()
                    .enumerate()
                    .map(|(j, e)| {
                        let mut sections = vec![render_event_section(&[e])];
                        if use_chars && matrix[j].iter().any(|&p| p) {
                            let present: Vec<&CharacterChainNode> =
                                characters.iter().zip(&matrix[j]).filter(|(_, &p)| p).map(|(c, _)| c).collect();
                            sections.push(render_character_section(&present));
                        }
                        aggregate(ctx, &sections, qid)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                for (node, (prompt, reply)) in result.nodes.iter_mut().zip(replies) {
                    let reply = reply.trim();
                    node.synthesized =
                        Some(if reply.is_empty() { node.event.description.clone() } else { reply.to_string() });
                    result.prompts.push(prompt);
                }
            }
            SynthesisMode::Batched => {
                let refs: Vec<&EventChainNode> = events.iter().collect();
                let mut sections = vec![render_event_section(&refs)];
                if use_chars {
                    sections.push(render_character_section(&all_chars));
                    sections.push(render_alignment_section(&refs, &participants));
                }
                let (prompt, reply) = aggregate(ctx, &sections, qid)?;
                result.prompts.push(prompt);
                result.narrative = Some(reply.trim().to_string());
            }
        }
    }

    let mut context = String::new();
    if ctx.cfg.include_subtitles {
        if let Some(ep) = ctx.corpus.episode(&question.series_id, question.episode_index) {
            context.push_str(&format!("{SUBTITLES_HEADER}\n{}\n\n", subtitle_lines(ep)));
        }
    }
    context.push_str(NARRATIVE_SECTION);
    for n in &result.nodes {
        if let Some(s) = &n.synthesized {
            let who = if n.participants.is_empty() {
                String::new()
            } else {
                format!(" (characters: {})", n.participants.join(", "))
            };
            context.push_str(&format!(
                "\n[{} {}-{}] {s}{who}",
                n.event.event_id,
                format_time(n.event.interval.start_s),
                format_time(n.event.interval.end_s)
            ));
        }
    }
    if let Some(narr) = &result.narrative {
        context.push('\n');
        context.push_str(narr);
    }
    let text = ctx.templates.render(
        "answer",
        &[
            ("context", &context),
            ("instruction", format_instruction(question.format)),
            ("question", &question_block(question)),
        ],
    )?;
    let (prompt, reply) = ctx.chat(vec![ContentPart::text(text)], qid, Stage::Answer)?;
    result.answer_prompt = prompt;
    result.final_answer = reply;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: &str, a: f64, b: f64) -> EventChainNode {
        EventChainNode {
            event_id: id.into(),
            event_text: "x".into(),
            description: "d".into(),
            interval: Interval::new(a, b),
            source_frames: vec![],
        }
    }

    fn ch(name: &str, times: &[f64]) -> CharacterChainNode {
        CharacterChainNode {
            character: name.into(),
            description: "c".into(),
            appearance_times: times.to_vec(),
            source_frames: vec![],
        }
    }

    #[test]
    fn participation_examples() {
        let m = participation_matrix(
            &[ev("E1", 10.0, 20.0)],
            &[ch("A", &[5.0, 15.0]), ch("B", &[5.0, 25.0]), ch("C", &[20.0])],
        );
        assert_eq!(m, vec![vec![true, false, true]]);
    }

    #[test]
    fn sections_split_back() {
        let e = ev("E1", 1.0, 2.0);
        let c = ch("A", &[1.5]);
        let prompt =
            format!("intro\n\n{}\n\n{}\n\nouter", render_event_section(&[&e]), render_character_section(&[&c]));
        let secs = split_sections(&prompt);
        assert_eq!(secs[0].0, EVENT_SECTION);
        assert_eq!(secs[0].1, render_event_section(&[&e]));
        assert_eq!(secs[1].0, CHARACTER_SECTION);
        assert_eq!(secs[1].1, render_character_section(&[&c]));
        assert_eq!(secs.len(), 2);
    }
}

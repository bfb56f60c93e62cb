use regex::Regex;
use std::sync::OnceLock;

use super::{ChainContext, ChainError, ExtractionResult};
use crate::backend::{ContentPart, Stage};
use crate::datamodel::{CharacterProfile, Episode, Question, Series};
use crate::prompt::resolve_image;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Events,
    Characters,
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:[#*\s]*)(plot events?|key events?|events?|characters?|key characters?|事件|人物|角色)\s*(?:\*\*)?\s*[:：]\s*(.*)$",
        )
        .unwrap()
    })
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.)、:]|[-*•·])\s*").unwrap())
}

fn inline_enum_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+\d+\s*[.)]\s+").unwrap())
}

fn clean(item: &str) -> Option<String> {
    let s = item_re().replace(item, "");
    let s = s.trim().trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`' | '.' | '。' | ';' | '；')).trim();
    let lower = s.to_lowercase();
    if s.is_empty() || matches!(lower.as_str(), "none" | "n/a" | "na" | "无" | "-") {
        None
    } else {
        Some(s.to_string())
    }
}

fn split_events(lines: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for line in lines {
        let line = item_re().replace(line, "").into_owned();
        for piece in inline_enum_re().split(&line) {
            for p in piece.split([';', '；']) {
                out.extend(clean(p));
            }
        }
    }
    out
}

fn split_characters(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .flat_map(|l| {
            let l = item_re().replace(l, "").into_owned();
            l.split([',', '，', '、', ';', '；', '/']).filter_map(clean).collect::<Vec<_>>()
        })
        .collect()
}

fn dedup(items: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.iter().any(|o| o.to_lowercase() == i.to_lowercase()) {
            out.push(i);
        }
    }
    out
}

/// Parses `Events:` / `Characters:` sections from a model reply.
///
/// Items may be numbered, bulleted, inline or comma separated. Without any
/// section header, enumerated lines are read as events. Returns `None` when
/// nothing usable is found.
pub fn parse_extraction(raw: &str) -> Option<(Vec<String>, Vec<String>)> {
    let mut events: Vec<String> = Vec::new();
    let mut characters: Vec<String> = Vec::new();
    let mut current: Option<Section> = None;
    let mut saw_header = false;
    for line in raw.lines() {
        if let Some(c) = header_re().captures(line) {
            saw_header = true;
            let name = c[1].to_lowercase();
            let section =
                if name.contains("event") || name == "事件" { Section::Events } else { Section::Characters };
            current = Some(section);
            let rest = c[2].trim().to_string();
            if !rest.is_empty() {
                match section {
                    Section::Events => events.extend(split_events(&[rest])),
                    Section::Characters => characters.extend(split_characters(&[rest])),
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match current {
            Some(Section::Events) => events.extend(split_events(&[line.to_string()])),
            Some(Section::Characters) => characters.extend(split_characters(&[line.to_string()])),
            None => {}
        }
    }
    if !saw_header {
        let enumerated: Vec<String> = raw.lines().filter(|l| item_re().is_match(l)).map(str::to_string).collect();
        if enumerated.is_empty() {
            return None;
        }
        events = split_events(&enumerated);
        if events.is_empty() {
            return None;
        }
    }
    Some((dedup(events), dedup(characters)))
}

/// Maps extracted names onto the character sheet. Returns the names in sheet
/// order followed by unresolved names in extraction order, plus the unresolved list.
pub fn resolve_characters(names: &[String], sheet: &[CharacterProfile]) -> (Vec<String>, Vec<String>) {
    let mut resolved_idx: Vec<usize> = Vec::new();
    let mut unresolved: Vec<String> = Vec::new();
    for n in names {
        let lower = n.to_lowercase();
        let hit = sheet
            .iter()
            .position(|p| p.name.to_lowercase() == lower)
            .or_else(|| sheet.iter().position(|p| lower.contains(&p.name.to_lowercase())));
        match hit {
            Some(i) if !resolved_idx.contains(&i) => resolved_idx.push(i),
            Some(_) => {}
            None => unresolved.push(n.clone()),
        }
    }
    resolved_idx.sort_unstable();
    let ordered = resolved_idx.iter().map(|&i| sheet[i].name.clone()).chain(unresolved.iter().cloned()).collect();
    (ordered, unresolved)
}

fn options_text(q: &Question) -> String {
    q.options.iter().map(|o| format!("({}) {}", o.label, o.text)).collect::<Vec<_>>().join("\n")
}

/// Extraction prompt parts: sampled frames followed by the rendered template.
pub fn extraction_prompt(
    question: &Question,
    series: &Series,
    episode: &Episode,
    ctx: &ChainContext<'_>,
) -> Result<Vec<ContentPart>, ChainError> {
    let names: Vec<&str> = series.characters.iter().map(|c| c.name.as_str()).collect();
    let text = ctx.templates.render(
        "extract",
        &[
            ("theme", &series.theme_text),
            ("characters", &names.join(", ")),
            ("question", &question.stem),
            ("options", &options_text(question)),
        ],
    )?;
    let mut parts: Vec<ContentPart> = episode
        .frames
        .uniform_sample(ctx.cfg.extract_frames)
        .into_iter()
        .map(|f| ContentPart::image(resolve_image(&ctx.corpus.root_path, &f.image_ref)))
        .collect();
    parts.push(ContentPart::text(text));
    Ok(parts)
}

/// Runs the extraction prompt and parses the reply. Returns the prompt text,
/// the raw reply and the parse result.
pub fn extract_targets(
    question: &Question,
    series: &Series,
    episode: &Episode,
    ctx: &ChainContext<'_>,
) -> Result<(String, String, Result<ExtractionResult, ChainError>), ChainError> {
    let parts = extraction_prompt(question, series, episode, ctx)?;
    let (prompt, raw) = ctx.chat(parts, &question.id, Stage::Extract)?;
    let parsed = match parse_extraction(&raw) {
        Some((events, names)) => {
            let (characters, unresolved) = resolve_characters(&names, &series.characters);
            if !unresolved.is_empty() {
                log::debug!("{}: unresolved characters {:?}", question.id, unresolved);
            }
            Ok(ExtractionResult { events, characters, unresolved })
        }
        None => Err(ChainError::ExtractionFailed { raw: raw.clone() }),
    };
    Ok((prompt, raw, parsed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(raw: &str) -> (Vec<String>, Vec<String>) {
        parse_extraction(raw).unwrap()
    }

    #[test]
    fn canonical_format() {
        let (e, c) = p("Events: 1. exam retake\nCharacters: Yingyan, Director");
        assert_eq!(e, vec!["exam retake"]);
        assert_eq!(c, vec!["Yingyan", "Director"]);
    }

    #[test]
    fn duplicates_removed() {
        let (_, c) = p("Events:\n1. a\nCharacters: Yingyan, Yingyan");
        assert_eq!(c, vec!["Yingyan"]);
    }

    #[test]
    fn empty_events_section() {
        let (e, c) = p("Events:\nCharacters: Yingyan");
        assert!(e.is_empty());
        assert_eq!(c, vec!["Yingyan"]);
    }

    #[test]
    fn bulleted_and_markdown() {
        let (e, c) =
            p("**Events:**\n- quilt inspection\n- spider scare.\n\n**Characters:**\n- Sima Yi\n- dorm manager");
        assert_eq!(e, vec!["quilt inspection", "spider scare"]);
        assert_eq!(c, vec!["Sima Yi", "dorm manager"]);
    }

    #[test]
    fn inline_enumeration_and_chinese_headers() {
        let (e, _) = p("Events: 1. exam retake 2. results posted");
        assert_eq!(e, vec!["exam retake", "results posted"]);
        let (e, c) = p("事件：考试重考\n人物：英彦、主任");
        assert_eq!(e, vec!["考试重考"]);
        assert_eq!(c, vec!["英彦", "主任"]);
    }

    #[test]
    fn headerless_enumeration_and_failure() {
        let (e, c) = p("1. exam retake\n2. party");
        assert_eq!(e, vec!["exam retake", "party"]);
        assert!(c.is_empty());
        assert!(parse_extraction("I am not sure what you mean.").is_none());
    }

    #[test]
    fn resolution_uses_sheet_order() {
        let sheet = vec![
            CharacterProfile { name: "Director".into(), description: String::new(), portrait_ref: None },
            CharacterProfile { name: "Yingyan".into(), description: String::new(), portrait_ref: None },
        ];
        let names = vec!["yingyan".to_string(), "Stranger".to_string(), "the Director".to_string()];
        let (ordered, unresolved) = resolve_characters(&names, &sheet);
        assert_eq!(ordered, vec!["Director", "Yingyan", "Stranger"]);
        assert_eq!(unresolved, vec!["Stranger"]);
    }
}

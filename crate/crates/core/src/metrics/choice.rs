use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::datamodel::{ChoiceOption, JUDGMENT_FALSE, JUDGMENT_TRUE};

/// Which rule of the parsing cascade produced the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseRule {
    LabelToken,
    OptionText,
    JudgmentKeyword,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedChoice {
    /// `None` means unparsed.
    pub label: Option<String>,
    pub rule: ParseRule,
    pub raw: String,
}

impl ParsedChoice {
    pub fn unparsed(raw: &str) -> Self {
        Self { label: None, rule: ParseRule::Unparsed, raw: raw.to_string() }
    }

    pub fn is_parsed(&self) -> bool {
        self.label.is_some()
    }
}

fn label_patterns() -> &'static [Regex; 3] {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"[(（]\s*([A-Za-z])\s*[)）]").unwrap(),
            Regex::new(r"(?:^|[\s:：])([A-Z])\s*(?:[.．:：)）、]|$)").unwrap(),
            Regex::new(r"\b(?i:answer|option|choice)\s*(?i:is)?\s*[:：]?\s*([A-Z])\b").unwrap(),
        ]
    })
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

const TRUE_WORDS: &[&str] = &["true", "yes", "correct", "right"];
const FALSE_WORDS: &[&str] = &["false", "no", "incorrect", "wrong", "not"];
const TRUE_CJK: &[&str] = &["正确", "对", "是"];
const FALSE_CJK: &[&str] = &["错误", "不正确", "不对", "错", "否", "不是"];

fn judgment_polarity(raw: &str) -> Option<bool> {
    // earliest keyword wins; CJK negations are checked before their positive substrings
    let lower = raw.to_lowercase();
    let mut best: Option<(usize, bool)> = None;
    let mut consider = |pos: usize, value: bool| {
        if best.is_none_or(|(p, _)| pos < p) {
            best = Some((pos, value));
        }
    };
    let mut offset = 0;
    for word in lower.split(|c: char| !c.is_alphanumeric()) {
        if TRUE_WORDS.contains(&word) {
            consider(offset, true);
        } else if FALSE_WORDS.contains(&word) {
            consider(offset, false);
        }
        offset += word.len() + 1;
    }
    for w in FALSE_CJK {
        if let Some(p) = lower.find(w) {
            consider(p, false);
        }
    }
    for w in TRUE_CJK {
        if let Some(p) = lower.find(w) {
            let negated = FALSE_CJK.iter().any(|n| n.ends_with(w) && lower[..p + w.len()].ends_with(n));
            if !negated {
                consider(p, true);
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Extracts an option label from a free-form model response.
///
/// Rules, in order: an explicit label token such as `(B)` or `B.`; the
/// longest option text contained in the response; a true/false keyword when
/// the options are the judgment pair.
pub fn parse_choice(raw: &str, options: &[ChoiceOption]) -> ParsedChoice {
    let valid = |l: &str| options.iter().any(|o| o.label.eq_ignore_ascii_case(l));
    let canonical = |l: &str| options.iter().find(|o| o.label.eq_ignore_ascii_case(l)).map(|o| o.label.clone());

    let trimmed = raw.trim();
    if valid(trimmed) {
        return ParsedChoice { label: canonical(trimmed), rule: ParseRule::LabelToken, raw: raw.to_string() };
    }
    for re in label_patterns() {
        if let Some(m) = re.captures_iter(raw).map(|c| c.get(1).unwrap().as_str()).find(|l| valid(l)) {
            return ParsedChoice { label: canonical(m), rule: ParseRule::LabelToken, raw: raw.to_string() };
        }
    }

    let hay = normalize(raw);
    let best = options
        .iter()
        .map(|o| (o, normalize(&o.text)))
        .filter(|(_, t)| !t.is_empty() && hay.contains(t.as_str()))
        .max_by_key(|(_, t)| t.chars().count());
    if let Some((o, _)) = best {
        return ParsedChoice { label: Some(o.label.clone()), rule: ParseRule::OptionText, raw: raw.to_string() };
    }

    let find_text = |t: &str| options.iter().find(|o| o.text == t).map(|o| o.label.clone());
    if let (Some(t), Some(f)) = (find_text(JUDGMENT_TRUE), find_text(JUDGMENT_FALSE)) {
        if let Some(v) = judgment_polarity(raw) {
            let label = if v { t } else { f };
            return ParsedChoice { label: Some(label), rule: ParseRule::JudgmentKeyword, raw: raw.to_string() };
        }
    }
    ParsedChoice::unparsed(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::judgment_options;

    fn four() -> Vec<ChoiceOption> {
        ["Sleeping in the dorm", "Acting on the floor", "Eating dinner", "Reading"]
            .iter()
            .enumerate()
            .map(|(i, t)| ChoiceOption::new(crate::datamodel::option_label(i), *t))
            .collect()
    }

    #[test]
    fn label_token_rule() {
        let p = parse_choice("The answer is (B) because...", &four());
        assert_eq!((p.label.as_deref(), p.rule), (Some("B"), ParseRule::LabelToken));
        assert_eq!(parse_choice("C. Eating dinner", &four()).label.as_deref(), Some("C"));
        assert_eq!(parse_choice(" d ", &four()).label.as_deref(), Some("D"));
        assert_eq!(parse_choice("Answer: A", &four()).label.as_deref(), Some("A"));
    }

    #[test]
    fn option_text_rule() {
        let p = parse_choice("Acting on the floor.", &four());
        assert_eq!((p.label.as_deref(), p.rule), (Some("B"), ParseRule::OptionText));
    }

    #[test]
    fn unparsed() {
        let p = parse_choice("I cannot determine.", &four());
        assert_eq!(p.rule, ParseRule::Unparsed);
        assert!(!p.is_parsed());
    }

    #[test]
    fn judgment_keywords() {
        let j = judgment_options();
        assert_eq!(parse_choice("Yes, that happened.", &j).label.as_deref(), Some("A"));
        assert_eq!(parse_choice("That is incorrect.", &j).label.as_deref(), Some("B"));
        assert_eq!(parse_choice("不正确", &j).label.as_deref(), Some("B"));
        assert_eq!(parse_choice("正确", &j).label.as_deref(), Some("A"));
        assert_eq!(parse_choice("false", &j).label.as_deref(), Some("B"));
    }
}

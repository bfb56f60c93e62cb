//! Prompt templates with `{name}` placeholders.
//!
//! The built-in set is compiled from `templates/*.txt`. A directory holding
//! files with the same names overrides individual templates.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const BUILTIN_VERSION: &str = "dual-chain-v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` has no value for placeholder `{name}`")]
    MissingValue { template: String, name: String },
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Template {
    pub name: String,
    pub text: String,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl Template {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    if !out.contains(&&after[..close]) {
                        out.push(&after[..close]);
                    }
                    rest = &after[close + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Single-pass substitution; substituted values are never rescanned.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    let name = &after[..close];
                    let value = values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).ok_or_else(|| {
                        TemplateError::MissingValue { template: self.name.clone(), name: name.to_string() }
                    })?;
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }
}

pub const TEMPLATE_NAMES: [&str; 8] =
    ["extract", "describe_event", "describe_character", "aggregate", "answer", "evaluate", "multi_episode", "generate"];

const BUILTIN: [(&str, &str); 8] = [
    ("extract", include_str!("../templates/extract.txt")),
    ("describe_event", include_str!("../templates/describe_event.txt")),
    ("describe_character", include_str!("../templates/describe_character.txt")),
    ("aggregate", include_str!("../templates/aggregate.txt")),
    ("answer", include_str!("../templates/answer.txt")),
    ("evaluate", include_str!("../templates/evaluate.txt")),
    ("multi_episode", include_str!("../templates/multi_episode.txt")),
    ("generate", include_str!("../templates/generate.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateSet {
    pub version: String,
    templates: BTreeMap<String, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN.iter().map(|(n, t)| (n.to_string(), Template::new(*n, *t))).collect();
        Self { version: BUILTIN_VERSION.to_string(), templates }
    }

    /// Built-in set with any `<name>.txt` found in `dir` replacing the default.
    /// A `VERSION` file in the directory names the resulting set.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let io =
            |p: &Path, e: std::io::Error| TemplateError::Io { path: p.display().to_string(), message: e.to_string() };
        let mut changed = false;
        for name in TEMPLATE_NAMES {
            let p = dir.join(format!("{name}.txt"));
            if p.is_file() {
                let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
                set.templates.insert(name.to_string(), Template::new(name, text));
                changed = true;
            }
        }
        let vp = dir.join("VERSION");
        if vp.is_file() {
            set.version = std::fs::read_to_string(&vp).map_err(|e| io(&vp, e))?.trim().to_string();
        } else if changed {
            set.version = format!("{BUILTIN_VERSION}+custom-{}", &set.digest()[..12]);
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&Template, TemplateError> {
        self.templates.get(name).ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.get(name)?.render(values)
    }

    /// Content digest over every template text.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.templates {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(t.text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once() {
        let t = Template::new("t", "a {x} b {y} {not valid} {x}");
        assert_eq!(t.render(&[("x", "{y}"), ("y", "2")]).unwrap(), "a {y} b 2 {not valid} {y}");
        assert_eq!(t.placeholders(), vec!["x", "y"]);
        assert!(matches!(t.render(&[("x", "1")]), Err(TemplateError::MissingValue { .. })));
    }

    #[test]
    fn builtin_templates_have_expected_placeholders() {
        let set = TemplateSet::builtin();
        assert_eq!(set.get("aggregate").unwrap().placeholders(), vec!["sections"]);
        assert_eq!(set.get("answer").unwrap().placeholders(), vec!["context", "instruction", "question"]);
        for name in TEMPLATE_NAMES {
            assert!(set.get(name).is_ok(), "{name}");
        }
    }

    #[test]
    fn overrides_change_version() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("answer.txt"), "{question}").unwrap();
        let set = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.render("answer", &[("question", "q")]).unwrap(), "q");
        assert_ne!(set.version, BUILTIN_VERSION);
        assert_ne!(set.digest(), TemplateSet::builtin().digest());
    }
}

use serde::{Deserialize, Serialize};

/// How runs of CJK characters are split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CjkMode {
    /// One token per character.
    #[default]
    Char,
    /// One token per contiguous run.
    Run,
}

/// Whitespace and punctuation splitting for Latin text, lowercased.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub cjk: CjkMode,
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

impl Tokenizer {
    pub fn char_level() -> Self {
        Self { cjk: CjkMode::Char }
    }

    pub fn run_level() -> Self {
        Self { cjk: CjkMode::Run }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        let mut run = String::new();
        let flush = |buf: &mut String, out: &mut Vec<String>| {
            if !buf.is_empty() {
                out.push(std::mem::take(buf));
            }
        };
        for c in text.chars() {
            if is_cjk(c) {
                flush(&mut word, &mut out);
                match self.cjk {
                    CjkMode::Char => out.push(c.to_string()),
                    CjkMode::Run => run.push(c),
                }
            } else {
                flush(&mut run, &mut out);
                if c.is_alphanumeric() {
                    word.extend(c.to_lowercase());
                } else {
                    flush(&mut word, &mut out);
                }
            }
        }
        flush(&mut word, &mut out);
        flush(&mut run, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_and_cjk() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("The cat, sat!"), vec!["the", "cat", "sat"]);
        assert_eq!(t.tokenize("宿管被蜘蛛吓到 ok"), vec!["宿", "管", "被", "蜘", "蛛", "吓", "到", "ok"]);
        assert_eq!(Tokenizer::run_level().tokenize("宿管，被吓到"), vec!["宿管", "被吓到"]);
        assert!(t.tokenize("  ... ").is_empty());
    }
}

//! Deterministic scripted backend for offline runs.
//!
//! Embeddings hash `(seed, payload)` onto the unit sphere. Image references of
//! the form `stub:<id>#<label>|<label>...` embed as the normalized sum of their
//! label vectors plus a small seeded noise term, so a text query equal to a
//! label scores high against every frame carrying it.
//!
//! Chat replies are resolved in order: an `#ECHO:<text>` marker in the prompt,
//! then the first matching [`MockRule`], then a keyword-echo template.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{BackendError, ChatRequest, ChatResponse, EmbeddingKind, EmbeddingRequest, ModelBackend, Stage, Usage};
use crate::datamodel::STUB_PREFIX;

pub const ECHO_MARKER: &str = "#ECHO:";
pub const FAIL_MARKER: &str = "#FAIL";

/// Scripted reply. All present conditions must hold.
///
/// `reply` may contain `{labels:<regex>}` (stub labels of attached images
/// matching the regex) and `{echo:<regex>}` (matches in the prompt text);
/// both expand to distinct matches in order of first appearance. A reply
/// starting with `#FAIL` makes the call fail.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_label: Option<String>,
    pub reply: String,
}

impl MockRule {
    pub fn reply(reply: impl Into<String>) -> Self {
        Self { reply: reply.into(), ..Self::default() }
    }

    pub fn for_question(mut self, id: impl Into<String>) -> Self {
        self.question_id = Some(id.into());
        self
    }

    pub fn at_stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn with_image_label(mut self, label: impl Into<String>) -> Self {
        self.image_label = Some(label.into());
        self
    }

    fn matches(&self, req: &ChatRequest, prompt: &str, labels: &[String]) -> bool {
        if let Some(q) = &self.question_id {
            if req.meta.question_id.as_deref() != Some(q.as_str()) {
                return false;
            }
        }
        if let Some(s) = self.stage {
            if req.meta.stage != Some(s) {
                return false;
            }
        }
        if let Some(l) = &self.image_label {
            if !labels.iter().any(|x| x == l) {
                return false;
            }
        }
        self.contains.iter().all(|c| prompt.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_noise")]
    pub image_noise: f32,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// JSON file holding an array of rules, appended after `rules`.
    #[serde(default)]
    pub rules_path: Option<PathBuf>,
}

fn default_dim() -> usize {
    384
}

fn default_noise() -> f32 {
    0.1
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { seed: 0, dim: default_dim(), image_noise: default_noise(), rules: Vec::new(), rules_path: None }
    }
}

/// Parsed `stub:` image reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubImage {
    pub id: String,
    pub labels: Vec<String>,
}

impl StubImage {
    pub fn parse(image_ref: &str) -> Option<Self> {
        let body = image_ref.strip_prefix(STUB_PREFIX)?;
        let (id, labels) = match body.split_once('#') {
            Some((id, rest)) => (id, rest.split('|').filter(|l| !l.is_empty()).map(str::to_string).collect()),
            None => (body, Vec::new()),
        };
        Some(Self { id: id.to_string(), labels })
    }

    pub fn render(id: &str, labels: &[String]) -> String {
        if labels.is_empty() {
            format!("{STUB_PREFIX}{id}")
        } else {
            format!("{STUB_PREFIX}{id}#{}", labels.join("|"))
        }
    }
}

pub struct MockBackend {
    seed: u64,
    dim: usize,
    image_noise: f32,
    rules: Vec<MockRule>,
    regexes: Mutex<HashMap<String, Regex>>,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_rules(seed, Vec::new())
    }

    pub fn with_rules(seed: u64, rules: Vec<MockRule>) -> Self {
        Self {
            seed,
            dim: default_dim(),
            image_noise: default_noise(),
            rules,
            regexes: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_config(cfg: &MockConfig) -> Result<Self, BackendError> {
        let mut rules = cfg.rules.clone();
        if let Some(p) = &cfg.rules_path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| BackendError::InvalidRequest(format!("mock rules {}: {e}", p.display())))?;
            let extra: Vec<MockRule> = serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidRequest(format!("mock rules {}: {e}", p.display())))?;
            rules.extend(extra);
        }
        let mut m = Self::with_rules(cfg.seed, rules);
        m.dim = cfg.dim.max(2);
        m.image_noise = cfg.image_noise;
        Ok(m)
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim.max(2);
        self
    }

    pub fn with_image_noise(mut self, noise: f32) -> Self {
        self.image_noise = noise;
        self
    }

    pub fn push_rule(&mut self, rule: MockRule) {
        self.rules.push(rule);
    }

    /// Calls served by this backend instance.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Unit vector for a text key; equals the direction of a stub label with the same text.
    pub fn label_vector(&self, text: &str) -> Vec<f32> {
        hash_to_sphere(self.seed, &format!("text|{}", canonical(text)), self.dim)
    }

    fn image_vector(&self, image_ref: &str) -> Vec<f32> {
        match StubImage::parse(image_ref) {
            Some(stub) if !stub.labels.is_empty() => {
                let mut acc = vec![0.0f64; self.dim];
                for l in &stub.labels {
                    for (a, x) in acc.iter_mut().zip(self.label_vector(l)) {
                        *a += f64::from(x);
                    }
                }
                let noise = hash_to_sphere(self.seed, &format!("noise|{}", stub.id), self.dim);
                for (a, x) in acc.iter_mut().zip(noise) {
                    *a += f64::from(self.image_noise) * f64::from(x);
                }
                let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
                acc.iter().map(|x| (x / norm) as f32).collect()
            }
            _ => hash_to_sphere(self.seed, &format!("image|{image_ref}"), self.dim),
        }
    }

    fn regex(&self, pattern: &str) -> Result<Regex, BackendError> {
        let mut cache = self.regexes.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(r) = cache.get(pattern) {
            return Ok(r.clone());
        }
        let r = Regex::new(pattern).map_err(|e| BackendError::InvalidRequest(format!("mock rule regex: {e}")))?;
        cache.insert(pattern.to_string(), r.clone());
        Ok(r)
    }

    fn expand(&self, template: &str, prompt: &str, labels: &[String]) -> Result<String, BackendError> {
        let placeholder = self.regex(r"\{(labels|echo):([^}]*)\}")?;
        let mut out = String::new();
        let mut last = 0;
        for cap in placeholder.captures_iter(template) {
            let whole = cap.get(0).expect("match");
            out.push_str(&template[last..whole.start()]);
            let re = self.regex(&cap[2])?;
            let found: Vec<&str> = match &cap[1] {
                "labels" => labels.iter().map(String::as_str).filter(|l| re.is_match(l)).collect(),
                _ => re.find_iter(prompt).map(|m| m.as_str()).collect(),
            };
            let mut seen = Vec::new();
            for f in found {
                if !seen.contains(&f) {
                    seen.push(f);
                }
            }
            out.push_str(&seen.join(if &cap[1] == "labels" { ", " } else { " " }));
            last = whole.end();
        }
        out.push_str(&template[last..]);
        Ok(out)
    }

    fn respond(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let prompt = req.prompt_text();
        if let Some(pos) = prompt.find(ECHO_MARKER) {
            let rest = &prompt[pos + ECHO_MARKER.len()..];
            return Ok(rest.lines().next().unwrap_or("").trim().to_string());
        }
        let labels: Vec<String> = req.image_refs().filter_map(StubImage::parse).flat_map(|s| s.labels).collect();
        if let Some(rule) = self.rules.iter().find(|r| r.matches(req, &prompt, &labels)) {
            if let Some(msg) = rule.reply.strip_prefix(FAIL_MARKER) {
                return Err(BackendError::Unavailable(format!("scripted failure{msg}")));
            }
            return self.expand(&rule.reply, &prompt, &labels);
        }
        Ok(keyword_echo(&prompt))
    }
}

impl ModelBackend for MockBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.respond(req)?;
        let usage = Usage {
            prompt_tokens: req.prompt_text().split_whitespace().count() as u64,
            completion_tokens: text.split_whitespace().count() as u64,
        };
        Ok(ChatResponse { text, usage })
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f32>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(match req.kind {
            EmbeddingKind::Text => self.label_vector(&req.payload),
            EmbeddingKind::Image => self.image_vector(&req.payload),
        })
    }
}

fn canonical(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Seeded Gaussian direction, normalized. Stable across runs and platforms.
pub(crate) fn hash_to_sphere(seed: u64, key: &str, dim: usize) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.iter().map(|x| (x / norm) as f32).collect()
}

const STOPWORDS: &[&str] = &[
    "that",
    "this",
    "with",
    "from",
    "have",
    "what",
    "which",
    "when",
    "where",
    "your",
    "about",
    "based",
    "question",
    "answer",
    "following",
    "please",
    "only",
    "they",
    "them",
    "their",
    "there",
    "were",
    "will",
    "into",
    "each",
];

fn keyword_echo(prompt: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for w in prompt.split(|c: char| !c.is_alphanumeric()) {
        let lw = w.to_lowercase();
        if lw.chars().count() >= 4 && !STOPWORDS.contains(&lw.as_str()) && !words.contains(&lw) {
            words.push(lw);
            if words.len() == 8 {
                break;
            }
        }
    }
    format!("Noted keywords: {}.", words.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ContentPart;

    fn cos(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn echo_marker_wins() {
        let m = MockBackend::with_rules(1, vec![MockRule::reply("rule")]);
        let r = ChatRequest::new("m", vec![ContentPart::text("please #ECHO:x\nmore")]);
        assert_eq!(m.chat(&r).unwrap().text, "x");
    }

    #[test]
    fn question_rule_applies() {
        let m = MockBackend::with_rules(1, vec![MockRule::reply("(B)").for_question("Q7")]);
        let r = ChatRequest::new("m", vec![ContentPart::text("which?")]).with_meta(Some("Q7"), Stage::Answer);
        assert_eq!(m.chat(&r).unwrap().text, "(B)");
        let other = ChatRequest::new("m", vec![ContentPart::text("which?")]).with_meta(Some("Q8"), Stage::Answer);
        assert!(m.chat(&other).unwrap().text.starts_with("Noted keywords"));
    }

    #[test]
    fn placeholders_expand() {
        let m = MockBackend::with_rules(
            1,
            vec![MockRule::reply("saw {labels:^EFACT-} / {echo:FACT-[0-9]+}").at_stage(Stage::DescribeEvent)],
        );
        let r = ChatRequest::new(
            "m",
            vec![
                ContentPart::text("mention FACT-1 and FACT-2 and FACT-1"),
                ContentPart::image("stub:f1#exam|EFACT-a"),
                ContentPart::image("stub:f2#EFACT-a|EFACT-b"),
            ],
        )
        .with_meta(None, Stage::DescribeEvent);
        assert_eq!(m.chat(&r).unwrap().text, "saw EFACT-a, EFACT-b / FACT-1 FACT-2");
    }

    #[test]
    fn fail_marker_errors() {
        let m = MockBackend::with_rules(1, vec![MockRule::reply("#FAIL: boom")]);
        let r = ChatRequest::new("m", vec![ContentPart::text("x")]);
        assert!(matches!(m.chat(&r), Err(BackendError::Unavailable(_))));
    }

    #[test]
    fn embeddings_are_seeded_and_unit() {
        let a = MockBackend::new(3);
        let b = MockBackend::new(4);
        let x = a.embed(&EmbeddingRequest::text("m", "hello")).unwrap();
        assert_eq!(x, a.embed(&EmbeddingRequest::text("m", "hello")).unwrap());
        assert_ne!(x, b.embed(&EmbeddingRequest::text("m", "hello")).unwrap());
        assert!((cos(&x, &x) - 1.0).abs() < 1e-5);
        assert_eq!(x.len(), 384);
    }

    #[test]
    fn stub_labels_drive_image_similarity() {
        let m = MockBackend::new(11);
        let frame = m.embed(&EmbeddingRequest::image("m", "stub:f1#exam retake|Yingyan")).unwrap();
        let ev = m.embed(&EmbeddingRequest::text("m", "Exam  retake")).unwrap();
        let other = m.embed(&EmbeddingRequest::text("m", "dinner party")).unwrap();
        assert!(cos(&frame, &ev) > 0.6, "{}", cos(&frame, &ev));
        assert!(cos(&frame, &other).abs() < 0.25);
    }

    #[test]
    fn stub_parse() {
        let s = StubImage::parse("stub:s1/e1/f3#a|b c").unwrap();
        assert_eq!(s.id, "s1/e1/f3");
        assert_eq!(s.labels, vec!["a", "b c"]);
        assert_eq!(StubImage::render(&s.id, &s.labels), "stub:s1/e1/f3#a|b c");
        assert!(StubImage::parse("frames/1.png").is_none());
        assert!(StubImage::parse("stub:x").unwrap().labels.is_empty());
    }
}

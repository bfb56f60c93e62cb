//! Chat and embedding model clients.
//!
//! Every model call in the engine goes through [`Client`], which layers a
//! content-addressed response cache, an in-flight limiter, embedding
//! normalization and per-model dimension checks over a [`ModelBackend`]
//! transport (the scripted [`MockBackend`] or the [`HttpBackend`]).

mod cache;
mod http;
mod mock;

pub use cache::{CacheKey, CachedEntry, ResponseCache};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use mock::{MockBackend, MockConfig, MockRule, StubImage};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response envelope: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension mismatch for model `{model_id}`: expected {expected}, got {got}")]
    DimensionMismatch { model_id: String, expected: usize, got: usize },
    #[error("backend returned a zero embedding vector")]
    ZeroVector,
    #[error("cache error: {0}")]
    Cache(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text {
        text: String,
    },
    /// Path to an image file, or a `stub:` reference.
    Image {
        image_ref: String,
    },
}

impl ContentPart {
    pub fn text(t: impl Into<String>) -> Self {
        ContentPart::Text { text: t.into() }
    }

    pub fn image(r: impl Into<String>) -> Self {
        ContentPart::Image { image_ref: r.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn user(parts: Vec<ContentPart>) -> Self {
        Self { role: Role::User, parts }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, parts: vec![ContentPart::text(text)] }
    }
}

/// Pipeline stage that issued a request. Used for scripting and audit only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    DescribeEvent,
    DescribeCharacter,
    Aggregate,
    Answer,
    Generate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Request metadata. Never sent over the wire, but part of the cache digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f32,
    #[serde(default)]
    pub meta: RequestMeta,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, parts: Vec<ContentPart>) -> Self {
        Self {
            model_id: model_id.into(),
            messages: vec![ChatMessage::user(parts)],
            max_tokens: 1024,
            temperature: 0.0,
            meta: RequestMeta::default(),
        }
    }

    pub fn with_meta(mut self, question_id: Option<&str>, stage: Stage) -> Self {
        self.meta = RequestMeta { question_id: question_id.map(str::to_string), stage: Some(stage) };
        self
    }

    /// All text parts joined by newlines.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        for part in self.messages.iter().flat_map(|m| &m.parts) {
            if let ContentPart::Text { text } = part {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(text);
            }
        }
        out
    }

    pub fn image_refs(&self) -> impl Iterator<Item = &str> {
        self.messages.iter().flat_map(|m| &m.parts).filter_map(|p| match p {
            ContentPart::Image { image_ref } => Some(image_ref.as_str()),
            ContentPart::Text { .. } => None,
        })
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("chat request has no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        #[derive(Serialize)]
        struct Canon<'a> {
            messages: &'a [ChatMessage],
            max_tokens: u32,
            temperature: f32,
            meta: &'a RequestMeta,
        }
        let canon = serde_json::to_string(&Canon {
            messages: &self.messages,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            meta: &self.meta,
        })
        .expect("chat request serializes");
        CacheKey::new("chat", &self.model_id, &canon)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Usage,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub kind: EmbeddingKind,
    /// Text, or an image path / `stub:` reference.
    pub payload: String,
    pub model_id: String,
}

impl EmbeddingRequest {
    pub fn text(model_id: impl Into<String>, payload: impl Into<String>) -> Self {
        Self { kind: EmbeddingKind::Text, payload: payload.into(), model_id: model_id.into() }
    }

    pub fn image(model_id: impl Into<String>, image_ref: impl Into<String>) -> Self {
        Self { kind: EmbeddingKind::Image, payload: image_ref.into(), model_id: model_id.into() }
    }

    pub fn cache_key(&self) -> CacheKey {
        let kind = match self.kind {
            EmbeddingKind::Text => "embed-text",
            EmbeddingKind::Image => "embed-image",
        };
        CacheKey::new(kind, &self.model_id, &self.payload)
    }
}

/// A model transport. Implementations must be deterministic for the cache
/// and concurrency guarantees to hold.
pub trait ModelBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
    /// Raw vector; the [`Client`] normalizes it.
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f32>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Mock(MockConfig),
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend: BackendKind,
    #[serde(default = "default_chat_model")]
    pub chat_model: String,
    #[serde(default = "default_embed_model")]
    pub embed_model: String,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_chat_model() -> String {
    "mock-chat".to_string()
}

fn default_embed_model() -> String {
    "mock-embed".to_string()
}

fn default_in_flight() -> usize {
    8
}

impl BackendConfig {
    /// Backend identity recorded in run reports and spec digests.
    pub fn identity(&self) -> String {
        match &self.backend {
            BackendKind::Mock(m) => format!("mock(seed={})/{}", m.seed, self.chat_model),
            BackendKind::Http(_) => format!("http/{}", self.chat_model),
        }
    }
}

/// Deterministic offline backend configuration.
pub fn mock_backend(seed: u64) -> BackendConfig {
    BackendConfig {
        backend: BackendKind::Mock(MockConfig { seed, ..MockConfig::default() }),
        chat_model: default_chat_model(),
        embed_model: default_embed_model(),
        cache_dir: None,
        max_in_flight: default_in_flight(),
    }
}

/// Counting semaphore bounding concurrent backend calls.
pub struct Limiter {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Self { max: max.max(1), in_use: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn capacity(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_use.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub backend_calls: u64,
    pub cache_hits: u64,
}

/// Shared, thread-safe entry point for all model calls.
pub struct Client {
    backend: Arc<dyn ModelBackend>,
    cache: Option<ResponseCache>,
    limiter: Limiter,
    dims: Mutex<HashMap<String, usize>>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    pub chat_model: String,
    pub embed_model: String,
}

impl Client {
    pub fn new(backend: Arc<dyn ModelBackend>) -> Self {
        Self {
            backend,
            cache: None,
            limiter: Limiter::new(default_in_flight()),
            dims: Mutex::new(HashMap::new()),
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            chat_model: default_chat_model(),
            embed_model: default_embed_model(),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let backend: Arc<dyn ModelBackend> = match &cfg.backend {
            BackendKind::Mock(m) => Arc::new(MockBackend::from_config(m)?),
            BackendKind::Http(h) => Arc::new(HttpBackend::new(h.clone())),
        };
        let mut client = Client::new(backend).with_max_in_flight(cfg.max_in_flight);
        client.chat_model = cfg.chat_model.clone();
        client.embed_model = cfg.embed_model.clone();
        if let Some(dir) = &cfg.cache_dir {
            client = client.with_cache(ResponseCache::new(dir));
        }
        Ok(client)
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.capacity()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            backend_calls: self.backend_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    /// Builds a single-message request against the client's chat model.
    pub fn request(&self, parts: Vec<ContentPart>) -> ChatRequest {
        ChatRequest::new(self.chat_model.clone(), parts)
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        req.validate()?;
        let key = req.cache_key();
        if let Some(CachedEntry::Chat { response, .. }) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(ChatReply { text: response.text, usage: response.usage, cache_hit: true });
        }
        let response = {
            let _permit = self.limiter.acquire();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.chat(req)?
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &CachedEntry::Chat { model_id: req.model_id.clone(), response: response.clone() })?;
        }
        Ok(ChatReply { text: response.text, usage: response.usage, cache_hit: false })
    }

    /// Unit-norm embedding; the dimension is pinned per model id on first use.
    pub fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f32>, BackendError> {
        if req.payload.is_empty() {
            return Err(BackendError::InvalidRequest("embedding payload is empty".into()));
        }
        let key = req.cache_key();
        let vector = match self.cache.as_ref().and_then(|c| c.get(&key)) {
            Some(CachedEntry::Embedding { vector, .. }) => {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                vector
            }
            _ => {
                let raw = {
                    let _permit = self.limiter.acquire();
                    self.backend_calls.fetch_add(1, Ordering::SeqCst);
                    self.backend.embed(req)?
                };
                let v = normalize(raw)?;
                if let Some(cache) = &self.cache {
                    cache.put(&key, &CachedEntry::Embedding { model_id: req.model_id.clone(), vector: v.clone() })?;
                }
                v
            }
        };
        let mut dims = self.dims.lock().unwrap_or_else(|p| p.into_inner());
        let expected = *dims.entry(req.model_id.clone()).or_insert(vector.len());
        if expected != vector.len() {
            return Err(BackendError::DimensionMismatch {
                model_id: req.model_id.clone(),
                expected,
                got: vector.len(),
            });
        }
        Ok(vector)
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        self.embed(&EmbeddingRequest::text(self.embed_model.clone(), text))
    }

    pub fn embed_image(&self, image_ref: &str) -> Result<Vec<f32>, BackendError> {
        self.embed(&EmbeddingRequest::image(self.embed_model.clone(), image_ref))
    }
}

fn normalize(mut v: Vec<f32>) -> Result<Vec<f32>, BackendError> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
        return Err(BackendError::ZeroVector);
    }
    for x in &mut v {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(v)
}

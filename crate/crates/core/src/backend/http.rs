//! Chat-completions style JSON-over-HTTP transport. The wire format is
//! documented in `docs/wire-protocol.md`.

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;

use super::mock::StubImage;
use super::{
    BackendError, ChatRequest, ChatResponse, ContentPart, EmbeddingKind, EmbeddingRequest, ModelBackend, Role, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << (attempt.saturating_sub(2)).min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    120
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key: None, timeout_s: default_timeout(), retry: RetryPolicy::default() }
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

enum Failure {
    Retryable(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s.max(1))))
            .build()
            .into();
        Self { cfg, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(body).expect("request body serializes");
        let mut resp = req
            .send(&payload[..])
            .map_err(|e| Failure::Retryable(BackendError::Transport { attempts: 1, message: e.to_string() }))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(BackendError::Transport { attempts: 1, message: e.to_string() }))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(BackendError::MalformedResponse(format!("invalid JSON: {e}")))),
            429 => Failure::Retryable(BackendError::RateLimited { attempts: 1 }).into_err(),
            500..=599 => Failure::Retryable(BackendError::Status { status, body: text }).into_err(),
            _ => Failure::Fatal(BackendError::Status { status, body: text }).into_err(),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(path);
        with_retry(&self.cfg.retry, std::thread::sleep, || self.post_once(&url, body))
    }
}

impl Failure {
    fn into_err<T>(self) -> Result<T, Failure> {
        Err(self)
    }
}

/// Runs `op` up to `policy.max_attempts` times, sleeping with exponential
/// backoff between retryable failures.
fn with_retry<T>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut op: impl FnMut() -> Result<T, Failure>,
) -> Result<T, BackendError> {
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retryable(e)) if attempt >= max => {
                return Err(match e {
                    BackendError::Transport { message, .. } => BackendError::Transport { attempts: attempt, message },
                    BackendError::RateLimited { .. } => BackendError::RateLimited { attempts: attempt },
                    other => other,
                });
            }
            Err(Failure::Retryable(e)) => {
                log::debug!("attempt {attempt} failed ({e}); retrying");
                attempt += 1;
                sleep(policy.delay_before(attempt));
            }
        }
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

/// `data:` URL with the base64-encoded file contents.
pub fn image_data_url(image_ref: &str) -> Result<String, BackendError> {
    let path = Path::new(image_ref);
    let bytes = std::fs::read(path).map_err(|e| BackendError::InvalidRequest(format!("image {image_ref}: {e}")))?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{};base64,{b64}", mime_for(path)))
}

/// Wire body for a chat request. Stub images become text placeholders.
pub fn chat_body(req: &ChatRequest) -> Result<Value, BackendError> {
    let mut messages = Vec::with_capacity(req.messages.len());
    for m in &req.messages {
        let mut content = Vec::with_capacity(m.parts.len());
        for p in &m.parts {
            content.push(match p {
                ContentPart::Text { text } => json!({"type": "text", "text": text}),
                ContentPart::Image { image_ref } if StubImage::parse(image_ref).is_some() => {
                    json!({"type": "text", "text": format!("[frame {image_ref}]")})
                }
                ContentPart::Image { image_ref } => {
                    json!({"type": "image_url", "image_url": {"url": image_data_url(image_ref)?}})
                }
            });
        }
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        messages.push(json!({"role": role, "content": content}));
    }
    Ok(json!({
        "model": req.model_id,
        "messages": messages,
        "max_tokens": req.max_tokens,
        "temperature": req.temperature,
    }))
}

pub fn parse_chat_response(v: &Value) -> Result<ChatResponse, BackendError> {
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => {
            parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join("")
        }
        _ => return Err(BackendError::MalformedResponse("content is neither string nor parts".into())),
    };
    let usage = Usage {
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    Ok(ChatResponse { text, usage })
}

pub fn embedding_body(req: &EmbeddingRequest) -> Result<Value, BackendError> {
    let input = match req.kind {
        EmbeddingKind::Text => req.payload.clone(),
        EmbeddingKind::Image if StubImage::parse(&req.payload).is_some() => {
            return Err(BackendError::InvalidRequest(format!("cannot embed stub image {} remotely", req.payload)))
        }
        EmbeddingKind::Image => image_data_url(&req.payload)?,
    };
    Ok(json!({"model": req.model_id, "input": input}))
}

pub fn parse_embedding_response(v: &Value) -> Result<Vec<f32>, BackendError> {
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::MalformedResponse("missing data[0].embedding".into()))?;
    arr.iter()
        .map(|x| {
            x.as_f64().map(|f| f as f32).ok_or_else(|| BackendError::MalformedResponse("non-numeric embedding".into()))
        })
        .collect()
}

impl ModelBackend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = chat_body(req)?;
        parse_chat_response(&self.post("chat/completions", &body)?)
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f32>, BackendError> {
        let body = embedding_body(req)?;
        parse_embedding_response(&self.post("embeddings", &body)?)
    }
}

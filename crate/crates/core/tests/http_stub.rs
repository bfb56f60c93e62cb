use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use dualchain_core::backend::{
    BackendError, ChatRequest, ContentPart, EmbeddingRequest, HttpBackend, HttpConfig, ModelBackend, RetryPolicy,
};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves the canned `(status, body)` responses in order, one per connection.
fn stub(responses: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                line: line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn backend(url: &str) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        api_key: Some("k-123".into()),
        retry: RetryPolicy { max_attempts: 3, base_delay_ms: 1 },
        ..HttpConfig::new(url)
    })
}

const CHAT_OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"(B) the manager"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

#[test]
fn chat_request_shape_and_reply() {
    let (url, seen) = stub(vec![(200, CHAT_OK)]);
    let req =
        ChatRequest::new("vlm-1", vec![ContentPart::text("Who was scared?"), ContentPart::image("stub:f1#spider")]);
    let resp = backend(&url).chat(&req).unwrap();
    assert_eq!(resp.text, "(B) the manager");
    assert_eq!(resp.usage.prompt_tokens, 12);

    let seen = seen.lock().unwrap();
    let s = &seen[0];
    assert_eq!(s.line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(s.header("authorization"), Some("Bearer k-123"));
    assert!(s.header("content-type").unwrap().starts_with("application/json"));
    assert_eq!(s.body["model"], "vlm-1");
    let content = &s.body["messages"][0]["content"];
    assert_eq!(s.body["messages"][0]["role"], "user");
    assert_eq!(content[0], serde_json::json!({"type": "text", "text": "Who was scared?"}));
    assert_eq!(content[1]["type"], "text");
    assert!(s.body.get("meta").is_none());
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = stub(vec![(503, "{}"), (500, "{}"), (200, CHAT_OK)]);
    let resp = backend(&url).chat(&ChatRequest::new("m", vec![ContentPart::text("q")])).unwrap();
    assert_eq!(resp.text, "(B) the manager");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn rate_limit_gives_up_after_three_attempts() {
    let (url, seen) = stub(vec![(429, "{}"), (429, "{}"), (429, "{}"), (200, CHAT_OK)]);
    let err = backend(&url).chat(&ChatRequest::new("m", vec![ContentPart::text("q")])).unwrap_err();
    assert!(matches!(err, BackendError::RateLimited { attempts: 3 }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, r#"{"error":"bad"}"#), (200, CHAT_OK)]);
    let err = backend(&url).chat(&ChatRequest::new("m", vec![ContentPart::text("q")])).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 400, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_reply_is_reported() {
    let (url, _) = stub(vec![(200, r#"{"choices":[]}"#)]);
    let err = backend(&url).chat(&ChatRequest::new("m", vec![ContentPart::text("q")])).unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn embeddings_round_trip() {
    let (url, seen) = stub(vec![(200, r#"{"data":[{"embedding":[0.6,0.8]}]}"#)]);
    let v = backend(&url).embed(&EmbeddingRequest::text("emb-1", "spider")).unwrap();
    assert_eq!(v, vec![0.6, 0.8]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].line, "POST /v1/embeddings HTTP/1.1");
    assert_eq!(seen[0].body, serde_json::json!({"model": "emb-1", "input": "spider"}));
}

#[test]
fn refused_connection_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = backend(&format!("http://127.0.0.1:{port}"))
        .chat(&ChatRequest::new("m", vec![ContentPart::text("q")]))
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err:?}");
}

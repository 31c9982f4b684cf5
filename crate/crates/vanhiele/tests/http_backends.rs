//! HTTP backends against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use vanhiele::backend::{BackendError, RetryPolicy};
use vanhiele::embedding::{Embedder, EmbeddingBackend, HttpEmbedder};
use vanhiele::error::exit;
use vanhiele::llm::{ChatBackend, CompletionRequest, Gateway, GeminiChat, OpenAiChat};
use vanhiele::Error;
use vanhiele_core::vector::TextRole;

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

struct Reply {
    status: u16,
    headers: Vec<(&'static str, &'static str)>,
    body: String,
}

fn ok(body: Value) -> Reply {
    Reply { status: 200, headers: vec![], body: body.to_string() }
}

fn status(code: u16) -> Reply {
    Reply { status: code, headers: vec![], body: "{\"error\":\"scripted\"}".into() }
}

struct Server {
    base: String,
    seen: Arc<Mutex<Vec<Seen>>>,
    handle: JoinHandle<()>,
}

impl Server {
    /// Answers one connection per scripted reply, in order, then stops.
    fn start(replies: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let handle = thread::spawn(move || {
            for reply in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut headers = Vec::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let (k, v) = line.split_once(':').unwrap();
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
                let length: usize = headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                    .map_or(0, |(_, v)| v.parse().unwrap());
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: serde_json::from_slice(&body).unwrap_or(Value::Null),
                });
                let mut out = format!(
                    "HTTP/1.1 {} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                    reply.status,
                    reply.body.len()
                );
                for (k, v) in &reply.headers {
                    out.push_str(&format!("{k}: {v}\r\n"));
                }
                out.push_str("\r\n");
                out.push_str(&reply.body);
                let mut stream = reader.into_inner();
                stream.write_all(out.as_bytes()).unwrap();
                stream.flush().unwrap();
            }
        });
        Self { base, seen, handle }
    }

    fn finish(self) -> Vec<Seen> {
        self.handle.join().unwrap();
        Arc::try_unwrap(self.seen).unwrap().into_inner().unwrap()
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(5),
        max_rate_limit_waits: 10,
    }
}

fn request() -> CompletionRequest {
    CompletionRequest {
        model_id: "gemini-2.0-flash".into(),
        system_text: "system prompt".into(),
        user_text: "user prompt".into(),
        temperature: 0.0,
        max_output_tokens: 512,
    }
}

const TIMEOUT: Duration = Duration::from_secs(10);

#[test]
fn openai_request_and_response_shape() {
    let server = Server::start(vec![ok(json!({
        "choices": [{"message": {"role": "assistant", "content": "{\"level\": 3}"}}],
        "usage": {"prompt_tokens": 120, "completion_tokens": 7}
    }))]);
    let chat = OpenAiChat::new(format!("{}/v1/", server.base), Some("secret".into()), TIMEOUT).unwrap();
    let completion = chat.complete(&request()).unwrap();
    assert_eq!(completion.text, "{\"level\": 3}");
    let counts = completion.token_counts.unwrap();
    assert_eq!((counts.prompt, counts.completion), (Some(120), Some(7)));

    let seen = server.finish();
    assert_eq!(seen[0].request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen[0].header("authorization"), Some("Bearer secret"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "gemini-2.0-flash");
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "system prompt"}));
    assert_eq!(body["messages"][1], json!({"role": "user", "content": "user prompt"}));
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 512);
}

#[test]
fn gemini_request_and_response_shape() {
    let server = Server::start(vec![ok(json!({
        "candidates": [{"content": {"parts": [{"text": "{\"level\": "}, {"text": "2}"}]}}],
        "usageMetadata": {"promptTokenCount": 90, "candidatesTokenCount": 5}
    }))]);
    let chat = GeminiChat::new(&server.base, Some("k3y".into()), TIMEOUT).unwrap();
    let completion = chat.complete(&request()).unwrap();
    assert_eq!(completion.text, "{\"level\": 2}");

    let seen = server.finish();
    assert_eq!(seen[0].request_line, "POST /models/gemini-2.0-flash:generateContent HTTP/1.1");
    assert_eq!(seen[0].header("x-goog-api-key"), Some("k3y"));
    assert_eq!(seen[0].header("authorization"), None);
    let body = &seen[0].body;
    assert_eq!(body["systemInstruction"]["parts"][0]["text"], "system prompt");
    assert_eq!(body["contents"][0]["parts"][0]["text"], "user prompt");
    assert_eq!(body["generationConfig"]["maxOutputTokens"], 512);
}

#[test]
fn empty_completion_is_an_error() {
    let server = Server::start(vec![ok(json!({"choices": [{"message": {"content": "  "}}]}))]);
    let chat = OpenAiChat::new(&server.base, None, TIMEOUT).unwrap();
    assert_eq!(chat.complete(&request()).unwrap_err(), BackendError::Empty);
    assert_eq!(server.finish()[0].header("authorization"), None);
}

fn openai_reply(text: &str) -> Reply {
    ok(json!({"choices": [{"message": {"content": text}}]}))
}

#[test]
fn transient_failures_are_retried() {
    let server = Server::start(vec![status(503), status(502), openai_reply("{\"level\": 4}")]);
    let gateway = Gateway::new(Box::new(OpenAiChat::new(&server.base, None, TIMEOUT).unwrap()), None, fast_retry());
    assert_eq!(gateway.complete(&request()).unwrap(), "{\"level\": 4}");
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn exhausted_retries_exit_as_backend_failure() {
    let server = Server::start(vec![status(500), status(500), status(500)]);
    let gateway = Gateway::new(Box::new(OpenAiChat::new(&server.base, None, TIMEOUT).unwrap()), None, fast_retry());
    let err = gateway.complete(&request()).unwrap_err();
    assert!(matches!(&err, Error::Backend(BackendError::Exhausted { attempts: 3, .. })), "{err:?}");
    assert_eq!(err.exit_code(), exit::BACKEND);
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Server::start(vec![status(400)]);
    let gateway = Gateway::new(Box::new(OpenAiChat::new(&server.base, None, TIMEOUT).unwrap()), None, fast_retry());
    let err = gateway.complete(&request()).unwrap_err();
    assert!(matches!(err, Error::Backend(BackendError::Status { status: 400, .. })), "{err:?}");
    assert_eq!(server.finish().len(), 1);
}

#[test]
fn rate_limits_honour_retry_after_without_using_attempts() {
    let limited = || Reply { status: 429, headers: vec![("Retry-After", "0")], body: "{}".into() };
    let server = Server::start(vec![limited(), limited(), limited(), limited(), openai_reply("{\"level\": 1}")]);
    let policy = RetryPolicy { attempts: 1, ..fast_retry() };
    let gateway = Gateway::new(Box::new(OpenAiChat::new(&server.base, None, TIMEOUT).unwrap()), None, policy);
    assert_eq!(gateway.complete(&request()).unwrap(), "{\"level\": 1}");
    assert_eq!(server.finish().len(), 5);
}

#[test]
fn rate_limit_waits_are_bounded() {
    let limited = || Reply { status: 429, headers: vec![], body: "{}".into() };
    let server = Server::start((0..3).map(|_| limited()).collect());
    let policy = RetryPolicy { max_rate_limit_waits: 2, ..fast_retry() };
    let gateway = Gateway::new(Box::new(OpenAiChat::new(&server.base, None, TIMEOUT).unwrap()), None, policy);
    let err = gateway.complete(&request()).unwrap_err();
    assert!(matches!(err, Error::Backend(BackendError::RateLimited { .. })), "{err:?}");
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn unreachable_backend_is_a_backend_failure() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let chat = OpenAiChat::new(format!("http://127.0.0.1:{port}"), None, TIMEOUT).unwrap();
    let gateway = Gateway::new(Box::new(chat), None, fast_retry());
    let err = gateway.complete(&request()).unwrap_err();
    assert!(matches!(&err, Error::Backend(BackendError::Exhausted { last, .. }) if matches!(**last, BackendError::Transport(_))), "{err:?}");
    assert_eq!(err.exit_code(), exit::BACKEND);
}

#[test]
fn embedding_request_and_openai_response_shape() {
    let server = Server::start(vec![ok(json!({
        "data": [
            {"index": 1, "embedding": [0.0, 3.0, 4.0]},
            {"index": 0, "embedding": [1.0, 0.0, 0.0]}
        ]
    }))]);
    let backend = HttpEmbedder::new(format!("{}/embed", server.base), "multilingual-e5-base", Some("t".into()), TIMEOUT).unwrap();
    assert_eq!(backend.model_id(), "multilingual-e5-base");
    let embedder = Embedder::new(Box::new(backend), None, fast_retry());
    let vectors = embedder.embed_texts(&["first", "second"], TextRole::Response).unwrap();
    assert_eq!(vectors[0].values(), &[1.0, 0.0, 0.0]);
    assert_eq!(vectors[1].values(), &[0.0, 0.6, 0.8]);

    let seen = server.finish();
    assert_eq!(seen[0].request_line, "POST /embed HTTP/1.1");
    assert_eq!(seen[0].header("authorization"), Some("Bearer t"));
    assert_eq!(seen[0].body["input"], json!(["query: first", "query: second"]));
    assert_eq!(seen[0].body["model"], "multilingual-e5-base");
}

#[test]
fn embedding_alternative_shapes_and_prefixes() {
    let server = Server::start(vec![
        ok(json!({"embeddings": [{"values": [2.0, 0.0]}]})),
        ok(json!([[0.0, 5.0]])),
        ok(json!({"embeddings": [[1.0, 1.0], [1.0, 1.0]]})),
    ]);
    let backend = HttpEmbedder::new(&server.base, "multilingual-e5-base", None, TIMEOUT).unwrap();
    assert_eq!(backend.embed_batch(&["d"], TextRole::Skill).unwrap(), vec![vec![2.0, 0.0]]);
    let plain = HttpEmbedder::new(&server.base, "multilingual-e5-base", None, TIMEOUT).unwrap().with_role_prefixes(false);
    assert_eq!(plain.embed_batch(&["q"], TextRole::Question).unwrap(), vec![vec![0.0, 5.0]]);
    let err = plain.embed_batch(&["only one"], TextRole::Question).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");

    let seen = server.finish();
    assert_eq!(seen[0].body["input"], json!(["passage: d"]));
    assert_eq!(seen[1].body["input"], json!(["q"]));
}

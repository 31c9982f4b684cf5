//! Chat-completion backends, the completion cache, and the caching gateway.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use vanhiele_core::corpus::AnnotatedPair;

use crate::backend::{self, BackendError, RetryPolicy};
use crate::error::Result;
use crate::io::write_atomic;

pub const DEFAULT_CHAT_MODEL: &str = "gemini-2.0-flash";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    /// Cache key over model, temperature, and both prompt texts. The output-token limit is
    /// deliberately left out so raising it keeps existing entries valid.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        let temperature = format!("{:?}", self.temperature);
        for part in [self.model_id.as_str(), temperature.as_str(), self.system_text.as_str(), self.user_text.as_str()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: Option<u64>,
    pub completion: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub token_counts: Option<TokenCounts>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), token_counts: None }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    /// False for backends that can only serve cached completions.
    fn is_live(&self) -> bool {
        true
    }
}

/// `POST {base}/chat/completions` in the OpenAI request shape.
pub struct OpenAiChat {
    client: reqwest::blocking::Client,
    base_url: String,
    token: Option<String>,
}

impl OpenAiChat {
    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(backend::transport)?;
        Ok(Self { client, base_url: base_url.into().trim_end_matches('/').to_string(), token })
    }
}

impl ChatBackend for OpenAiChat {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let body = json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut call = self.client.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let response = backend::check_status(call.send().map_err(backend::transport)?)?;
        let value: Value = response.json().map_err(|e| BackendError::Protocol(e.to_string()))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?;
        let usage = &value["usage"];
        let token_counts = usage.is_object().then(|| TokenCounts {
            prompt: usage["prompt_tokens"].as_u64(),
            completion: usage["completion_tokens"].as_u64(),
        });
        non_empty(text, token_counts)
    }
}

/// `POST {base}/models/{model}:generateContent` in the Gemini request shape.
pub struct GeminiChat {
    client: reqwest::blocking::Client,
    base_url: String,
    token: Option<String>,
}

impl GeminiChat {
    pub const DEFAULT_BASE_URL: &'static str = "https://generativelanguage.googleapis.com/v1beta";

    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(backend::transport)?;
        Ok(Self { client, base_url: base_url.into().trim_end_matches('/').to_string(), token })
    }
}

impl ChatBackend for GeminiChat {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let body = json!({
            "systemInstruction": {"parts": [{"text": request.system_text}]},
            "contents": [{"role": "user", "parts": [{"text": request.user_text}]}],
            "generationConfig": {"temperature": request.temperature, "maxOutputTokens": request.max_output_tokens},
        });
        let url = format!("{}/models/{}:generateContent", self.base_url, request.model_id);
        let mut call = self.client.post(url).json(&body);
        if let Some(token) = &self.token {
            call = call.header("x-goog-api-key", token);
        }
        let response = backend::check_status(call.send().map_err(backend::transport)?)?;
        let value: Value = response.json().map_err(|e| BackendError::Protocol(e.to_string()))?;
        let parts = value["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| BackendError::Protocol("missing candidates[0].content.parts".into()))?;
        let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
        let usage = &value["usageMetadata"];
        let token_counts = usage.is_object().then(|| TokenCounts {
            prompt: usage["promptTokenCount"].as_u64(),
            completion: usage["candidatesTokenCount"].as_u64(),
        });
        non_empty(&text, token_counts)
    }
}

fn non_empty(text: &str, token_counts: Option<TokenCounts>) -> Result<Completion, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::Empty);
    }
    Ok(Completion { text: text.to_string(), token_counts })
}

/// Replies with a fixed script: one reply per call, repeating the last when exhausted.
pub struct ScriptedChat {
    replies: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedChat {
    pub fn new(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "a scripted backend needs at least one reply");
        Self { replies, next: AtomicUsize::new(0) }
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, _request: &CompletionRequest) -> Result<Completion, BackendError> {
        let i = self.next.fetch_add(1, Ordering::Relaxed).min(self.replies.len() - 1);
        Ok(Completion::text(self.replies[i].clone()))
    }
}

/// Oracle backend for pipeline tests: finds which known pair is being classified and
/// answers with its annotated level.
///
/// The target is the known response that occurs last in the user prompt (the prompt
/// template places the target after every retrieved example); among responses ending at
/// the same place the longest wins.
pub struct EchoChat {
    known: Vec<(String, u8)>,
}

impl EchoChat {
    pub fn new<'a>(pairs: impl IntoIterator<Item = &'a AnnotatedPair>) -> Self {
        Self { known: pairs.into_iter().map(|p| (p.response.clone(), p.level.value())).collect() }
    }
}

impl ChatBackend for EchoChat {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let best = self
            .known
            .iter()
            .filter_map(|(response, level)| {
                request.user_text.rfind(response.as_str()).map(|at| (at + response.len(), response.len(), *level))
            })
            .max_by_key(|&(end, len, _)| (end, len));
        match best {
            Some((_, _, level)) => Ok(Completion::text(format!("{{\"level\": {level}, \"rationale\": \"echo\"}}"))),
            None => Err(BackendError::Protocol("echo backend: target response is not in the corpus".into())),
        }
    }
}

/// Serves nothing; every request must be answered from the cache.
pub struct ReplayOnly;

impl ChatBackend for ReplayOnly {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        Err(BackendError::NotCached(request.cache_key()))
    }

    fn is_live(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub model_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<TokenCounts>,
}

/// `<key>.txt` holds the raw completion, `<key>.json` its sidecar.
#[derive(Debug, Clone)]
pub struct CompletionCache {
    root: PathBuf,
}

impl CompletionCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        fs::read_to_string(self.root.join(format!("{key}.txt"))).ok()
    }

    pub fn sidecar(&self, key: &str) -> Option<CacheSidecar> {
        let text = fs::read_to_string(self.root.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, request: &CompletionRequest, completion: &Completion) -> Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let sidecar = CacheSidecar { model_id: request.model_id.clone(), timestamp, token_counts: completion.token_counts };
        let mut meta = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        meta.push(b'\n');
        write_atomic(&self.root.join(format!("{key}.json")), &meta)?;
        write_atomic(&self.root.join(format!("{key}.txt")), completion.text.as_bytes())
    }
}

/// Cache-first access to a chat backend with bounded retries. Concurrent writers of one key
/// store identical content through atomic renames, so the last writer simply wins.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    cache: Option<CompletionCache>,
    retry: RetryPolicy,
    backend_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>, cache: Option<CompletionCache>, retry: RetryPolicy) -> Self {
        Self { backend, cache, retry, backend_calls: AtomicUsize::new(0) }
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let key = request.cache_key();
        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(text);
        }
        if !self.backend.is_live() {
            return Err(BackendError::NotCached(key).into());
        }
        let completion = self.retry.run(|| {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            self.backend.complete(request)
        })?;
        if let Some(cache) = &self.cache {
            cache.put(&key, request, &completion)?;
        }
        Ok(completion.text)
    }
}

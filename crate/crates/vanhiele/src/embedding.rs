//! Embedding backends, the content-addressed vector cache, and the caching embedder.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use vanhiele_core::corpus::AnnotatedPair;
use vanhiele_core::vector::{EmbeddingVector, PairEmbedding, TextRole, VectorError};

use crate::backend::{self, BackendError, RetryPolicy};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const DEFAULT_EMBEDDING_MODEL: &str = "multilingual-e5-base";

pub trait EmbeddingBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// One raw (not necessarily normalized) vector per input text, in order.
    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<Vec<f32>>, BackendError>;
}

/// Offline feature-hashing embedder: signed counts of lowercased word unigrams and bigrams.
/// Deterministic across platforms; texts sharing vocabulary land close together.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    model_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hash embedding dimension must be positive");
        Self { dim, model_id: format!("hash-{dim}") }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
        let mut out = vec![0f32; self.dim];
        let mut add = |feature: &str| {
            let digest = Sha256::digest(feature.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let slot = (h % self.dim as u64) as usize;
            out[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        if words.is_empty() {
            add(lower.trim());
        }
        for w in &words {
            add(w);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        out
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[&str], _role: TextRole) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an HTTP embedding endpoint taking `{"model", "input": [...]}`.
///
/// Accepted response shapes: a bare array of arrays, `{"data": [{"embedding": [...]}]}`, or
/// `{"embeddings": [[...]]}`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model_id: String,
    token: Option<String>,
    role_prefixes: bool,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let model_id = model_id.into();
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(backend::transport)?;
        let role_prefixes = model_id.contains("e5");
        Ok(Self { client, endpoint: endpoint.into(), model_id, token, role_prefixes })
    }

    /// Overrides the default, which enables `query: `/`passage: ` prefixes for e5-family models.
    pub fn with_role_prefixes(mut self, on: bool) -> Self {
        self.role_prefixes = on;
        self
    }

    fn prefix(&self, role: TextRole) -> &'static str {
        match (self.role_prefixes, role) {
            (false, _) => "",
            (true, TextRole::Question | TextRole::Response) => "query: ",
            (true, TextRole::Skill) => "passage: ",
        }
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<Vec<f32>>, BackendError> {
        let prefix = self.prefix(role);
        let input: Vec<String> = texts.iter().map(|t| format!("{prefix}{t}")).collect();
        let mut request = self.client.post(&self.endpoint).json(&json!({ "model": self.model_id, "input": input }));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = backend::check_status(request.send().map_err(backend::transport)?)?;
        let body: Value = response.json().map_err(|e| BackendError::Protocol(e.to_string()))?;
        let vectors = parse_embedding_response(&body)?;
        if vectors.len() != texts.len() {
            return Err(BackendError::Protocol(format!("{} vectors for {} inputs", vectors.len(), texts.len())));
        }
        Ok(vectors)
    }
}

fn parse_embedding_response(body: &Value) -> Result<Vec<Vec<f32>>, BackendError> {
    let rows: Vec<&Value> = match body {
        Value::Array(rows) => rows.iter().collect(),
        Value::Object(map) => {
            if let Some(Value::Array(data)) = map.get("data") {
                let mut items: Vec<(u64, &Value)> = data
                    .iter()
                    .enumerate()
                    .map(|(i, item)| (item.get("index").and_then(Value::as_u64).unwrap_or(i as u64), &item["embedding"]))
                    .collect();
                items.sort_by_key(|(i, _)| *i);
                items.into_iter().map(|(_, v)| v).collect()
            } else if let Some(Value::Array(rows)) = map.get("embeddings") {
                rows.iter().collect()
            } else {
                return Err(BackendError::Protocol("no embeddings in response".into()));
            }
        }
        _ => return Err(BackendError::Protocol("no embeddings in response".into())),
    };
    rows.into_iter()
        .map(|row| {
            let row = row.get("values").unwrap_or(row);
            row.as_array()
                .ok_or_else(|| BackendError::Protocol("embedding is not an array".into()))?
                .iter()
                .map(|x| x.as_f64().map(|x| x as f32).ok_or_else(|| BackendError::Protocol("non-numeric embedding value".into())))
                .collect()
        })
        .collect()
}

/// One file per `(model, role, text)` holding the normalized vector:
/// `u32` dimension, `u32` model-id length, model-id bytes, then little-endian `f32` values.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    root: PathBuf,
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(model_id: &str, role: TextRole, text: &str) -> String {
        let mut h = Sha256::new();
        for part in [model_id, role.as_str(), text] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.vec"))
    }

    /// A stored vector, or `None` on a miss. Unreadable or inconsistent entries count as misses.
    pub fn get(&self, key: &str, model_id: &str) -> Option<EmbeddingVector> {
        let bytes = fs::read(self.path(key)).ok()?;
        match decode_vector(&bytes) {
            Some(v) if v.model_id() == model_id => Some(v),
            _ => {
                tracing::warn!(key, "ignoring corrupt embedding cache entry");
                None
            }
        }
    }

    pub fn put(&self, key: &str, vector: &EmbeddingVector) -> Result<()> {
        write_atomic(&self.path(key), &encode_vector(vector))
    }
}

pub fn encode_vector(v: &EmbeddingVector) -> Vec<u8> {
    let model = v.model_id().as_bytes();
    let mut out = Vec::with_capacity(8 + model.len() + 4 * v.dim());
    out.extend_from_slice(&(v.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.len() as u32).to_le_bytes());
    out.extend_from_slice(model);
    for x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_vector(bytes: &[u8]) -> Option<EmbeddingVector> {
    let mut r = Reader(bytes);
    let dim = r.u32()? as usize;
    let model_len = r.u32()? as usize;
    let model = std::str::from_utf8(r.take(model_len)?).ok()?.to_string();
    let values = r.f32s(dim)?;
    if !r.0.is_empty() {
        return None;
    }
    EmbeddingVector::from_unit(values, model).ok()
}

pub(crate) struct Reader<'a>(pub(crate) &'a [u8]);

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Option<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4)?)?;
        Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

/// Normalizes, caches, and retries around an [`EmbeddingBackend`].
pub struct Embedder {
    backend: Box<dyn EmbeddingBackend>,
    cache: Option<EmbeddingCache>,
    retry: RetryPolicy,
    batch_size: usize,
    backend_calls: AtomicUsize,
}

impl Embedder {
    pub fn new(backend: Box<dyn EmbeddingBackend>, cache: Option<EmbeddingCache>, retry: RetryPolicy) -> Self {
        Self { backend, cache, retry, batch_size: 32, backend_calls: AtomicUsize::new(0) }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Number of batches sent to the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn embed_text(&self, text: &str, role: TextRole) -> Result<EmbeddingVector> {
        Ok(self.embed_texts(&[text], role)?.remove(0))
    }

    /// Embeds every text, serving cache hits locally and batching the misses.
    pub fn embed_texts(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Data(format!("cannot embed empty text (input {i})")));
        }
        let model = self.backend.model_id().to_string();
        let keys: Vec<String> = texts.iter().map(|t| EmbeddingCache::key(&model, role, t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> =
            keys.iter().map(|k| self.cache.as_ref().and_then(|c| c.get(k, &model))).collect();
        let misses: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        for chunk in misses.chunks(self.batch_size) {
            let batch: Vec<&str> = chunk.iter().map(|&i| texts[i]).collect();
            let raw = self.retry.run(|| {
                self.backend_calls.fetch_add(1, Ordering::Relaxed);
                self.backend.embed_batch(&batch, role)
            })?;
            if raw.len() != batch.len() {
                return Err(BackendError::Protocol(format!("{} vectors for {} inputs", raw.len(), batch.len())).into());
            }
            for (&i, values) in chunk.iter().zip(raw) {
                let vector = EmbeddingVector::normalized(&values, model.clone()).map_err(|e| match e {
                    VectorError::ZeroVector => Error::Backend(BackendError::ZeroVector),
                    other => Error::Backend(BackendError::Protocol(other.to_string())),
                })?;
                if let Some(cache) = &self.cache {
                    cache.put(&keys[i], &vector)?;
                }
                out[i] = Some(vector);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }

    /// Question, response, and combined vectors for each pair, in input order.
    pub fn embed_pairs(&self, pairs: &[AnnotatedPair], response_weight: f64) -> Result<Vec<PairEmbedding>> {
        let questions: Vec<&str> = pairs.iter().map(|p| p.question.as_str()).collect();
        let responses: Vec<&str> = pairs.iter().map(|p| p.response.as_str()).collect();
        let q = self.embed_texts(&questions, TextRole::Question)?;
        let r = self.embed_texts(&responses, TextRole::Response)?;
        pairs
            .iter()
            .zip(q.into_iter().zip(r))
            .map(|(pair, (qv, rv))| Ok(PairEmbedding::new(pair.id.clone(), qv, rv, response_weight)?))
            .collect()
    }
}

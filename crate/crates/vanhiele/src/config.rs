//! Run configuration: defaults, the TOML file format, and construction of the configured
//! backends. Secrets never live here; only the names of the environment variables that
//! hold them.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vanhiele_core::corpus::{AnnotatedPair, Strictness};
use vanhiele_core::folds::{DEFAULT_FOLDS, DEFAULT_SEED};
use vanhiele_core::index::DEFAULT_K;
use vanhiele_core::prompt::{PromptTemplates, PromptVariant, VariantKind};
use vanhiele_core::skills::DictionaryOptions;
use vanhiele_core::vector::{StoreWeighting, DEFAULT_RESPONSE_WEIGHT};

use crate::backend::{token_from_env, BackendError, RetryPolicy};
use crate::embedding::{Embedder, EmbeddingBackend, EmbeddingCache, HashEmbedder, HttpEmbedder, DEFAULT_EMBEDDING_MODEL};
use crate::error::{Error, Result};
use crate::io::read_text;
use crate::llm::{
    ChatBackend, CompletionCache, EchoChat, Gateway, GeminiChat, OpenAiChat, ReplayOnly, ScriptedChat, DEFAULT_CHAT_MODEL,
    DEFAULT_MAX_OUTPUT_TOKENS,
};
use crate::pipeline::RagSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_cache: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_cache: Option<PathBuf>,
    /// Audit directory for rendered prompts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    /// Directory with `system.txt`, `user.txt`, `output_format.txt`; bundled templates otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// An existing fold plan to reuse instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_plan: Option<PathBuf>,
    pub variant: VariantKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derangement_seed: Option<u64>,
    pub k: usize,
    pub response_weight: f64,
    pub store_weighting: StoreWeighting,
    pub exclude_validation_from_retrieval: bool,
    pub seed: u64,
    pub n_folds: usize,
    pub lenient: bool,
    pub parallelism: usize,
    pub format_retry: bool,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub retry: RetryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            dictionary: None,
            output_dir: PathBuf::from("runs/latest"),
            embedding_cache: None,
            completion_cache: None,
            prompts_dir: None,
            templates_dir: None,
            fold_plan: None,
            variant: VariantKind::SkillsAware,
            derangement_seed: None,
            k: DEFAULT_K,
            response_weight: DEFAULT_RESPONSE_WEIGHT,
            store_weighting: StoreWeighting::Combined,
            exclude_validation_from_retrieval: false,
            seed: DEFAULT_SEED,
            n_folds: DEFAULT_FOLDS,
            lenient: false,
            parallelism: 4,
            format_retry: false,
            embedding: EmbeddingConfig::default(),
            llm: LlmConfig::default(),
            retry: RetryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackendKind {
    Http,
    /// Offline feature hashing.
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackendKind,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub token_env: String,
    /// `query: `/`passage: ` prefixes; defaults to on for e5-family models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role_prefixes: Option<bool>,
    pub hash_dim: usize,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackendKind::Http,
            model: DEFAULT_EMBEDDING_MODEL.into(),
            endpoint: None,
            token_env: "VANHIELE_EMBEDDING_TOKEN".into(),
            role_prefixes: None,
            hash_dim: 384,
            batch_size: 32,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ChatBackendKind {
    Gemini,
    Openai,
    /// Cached completions only.
    Replay,
    /// Answers with the annotated level of the pair being classified.
    Echo,
    /// Fixed replies from `scripted_replies`.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: ChatBackendKind,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub token_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scripted_replies: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: ChatBackendKind::Gemini,
            model: DEFAULT_CHAT_MODEL.into(),
            endpoint: None,
            token_env: "VANHIELE_LLM_TOKEN".into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            scripted_replies: Vec::new(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_rate_limit_waits: u32,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let p = RetryPolicy::default();
        Self {
            attempts: p.attempts,
            initial_backoff_ms: p.initial_backoff.as_millis() as u64,
            max_backoff_ms: p.max_backoff.as_millis() as u64,
            max_rate_limit_waits: p.max_rate_limit_waits,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialize to TOML")
    }

    pub fn prompt_variant(&self) -> Result<PromptVariant> {
        Ok(PromptVariant::from_parts(self.variant, self.derangement_seed)?)
    }

    pub fn strictness(&self) -> Strictness {
        if self.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        }
    }

    pub fn dictionary_options(&self) -> DictionaryOptions {
        if self.lenient {
            DictionaryOptions::LENIENT
        } else {
            DictionaryOptions::STRICT
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retry.attempts,
            initial_backoff: Duration::from_millis(self.retry.initial_backoff_ms),
            max_backoff: Duration::from_millis(self.retry.max_backoff_ms),
            max_rate_limit_waits: self.retry.max_rate_limit_waits,
        }
    }

    pub fn rag_settings(&self) -> RagSettings {
        RagSettings {
            k: self.k,
            response_weight: self.response_weight,
            store_weighting: self.store_weighting,
            model_id: self.llm.model.clone(),
            temperature: self.llm.temperature,
            max_output_tokens: self.llm.max_output_tokens,
            format_retry: self.format_retry,
        }
    }

    /// Checks value ranges that the file format cannot express.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.response_weight > 0.0 && self.response_weight < 1.0) {
            return fail(format!("response_weight must lie strictly between 0 and 1, got {}", self.response_weight));
        }
        if self.n_folds < 2 {
            return fail(format!("n_folds must be at least 2, got {}", self.n_folds));
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1".into());
        }
        if self.embedding.hash_dim == 0 {
            return fail("embedding.hash_dim must be at least 1".into());
        }
        self.prompt_variant()?;
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| Error::Config("no data file given (--data or `data` in the config file)".into()))
    }

    pub fn dictionary_path(&self) -> Result<&Path> {
        self.dictionary
            .as_deref()
            .ok_or_else(|| Error::Config("no dictionary file given (--dictionary or `dictionary` in the config file)".into()))
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.templates_dir {
            None => Ok(PromptTemplates::default()),
            Some(dir) => Ok(PromptTemplates::new(
                &read_text(&dir.join("system.txt"))?,
                &read_text(&dir.join("user.txt"))?,
                &read_text(&dir.join("output_format.txt"))?,
            )?),
        }
    }

    pub fn embedder(&self) -> Result<Embedder> {
        let e = &self.embedding;
        let backend: Box<dyn EmbeddingBackend> = match e.backend {
            EmbeddingBackendKind::Hash => Box::new(HashEmbedder::new(e.hash_dim)),
            EmbeddingBackendKind::Http => {
                let endpoint = e.endpoint.clone().ok_or_else(|| {
                    Error::Config("the http embedding backend needs an endpoint (--embedding-endpoint or embedding.endpoint)".into())
                })?;
                let mut http = HttpEmbedder::new(endpoint, e.model.clone(), token_from_env(&e.token_env), Duration::from_secs(e.timeout_secs))?;
                if let Some(on) = e.role_prefixes {
                    http = http.with_role_prefixes(on);
                }
                Box::new(http)
            }
        };
        let cache = self.embedding_cache.as_ref().map(EmbeddingCache::new);
        Ok(Embedder::new(backend, cache, self.retry_policy()).with_batch_size(e.batch_size))
    }

    /// The configured chat gateway. The echo backend answers from `pairs`.
    pub fn gateway(&self, pairs: &[AnnotatedPair]) -> Result<Gateway> {
        let l = &self.llm;
        let timeout = Duration::from_secs(l.timeout_secs);
        let backend: Box<dyn ChatBackend> = match l.backend {
            ChatBackendKind::Gemini => {
                let base = l.endpoint.clone().unwrap_or_else(|| GeminiChat::DEFAULT_BASE_URL.into());
                Box::new(GeminiChat::new(base, token_from_env(&l.token_env), timeout)?)
            }
            ChatBackendKind::Openai => {
                let base = l
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("the openai backend needs an endpoint (--llm-endpoint or llm.endpoint)".into()))?;
                Box::new(OpenAiChat::new(base, token_from_env(&l.token_env), timeout)?)
            }
            ChatBackendKind::Replay => {
                if self.completion_cache.is_none() {
                    return Err(BackendError::Unconfigured("the replay backend needs a completion cache".into()).into());
                }
                Box::new(ReplayOnly)
            }
            ChatBackendKind::Echo => Box::new(EchoChat::new(pairs)),
            ChatBackendKind::Scripted => {
                if l.scripted_replies.is_empty() {
                    return Err(Error::Config("the scripted backend needs at least one reply (--scripted-reply)".into()));
                }
                Box::new(ScriptedChat::new(l.scripted_replies.clone()))
            }
        };
        let cache = self.completion_cache.as_ref().map(CompletionCache::new);
        Ok(Gateway::new(backend, cache, self.retry_policy()))
    }
}

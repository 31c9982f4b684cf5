//! Retrieval-augmented classification of single question–response pairs.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vanhiele_core::corpus::{AnnotatedPair, Corpus};
use vanhiele_core::index::VectorIndex;
use vanhiele_core::level::Level;
use vanhiele_core::parse::{parse_level, ParseStatus};
use vanhiele_core::prompt::{AssembledPrompt, PromptBuilder, PromptVariant, Target};
use vanhiele_core::vector::{weighted_query, EmbeddingVector, StoreWeighting, DEFAULT_RESPONSE_WEIGHT};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::llm::{CompletionRequest, Gateway, DEFAULT_CHAT_MODEL, DEFAULT_MAX_OUTPUT_TOKENS};

const FORMAT_REMINDER: &str = "Your previous reply could not be read. Reply again with only the JSON object described above.";

#[derive(Debug, Clone, PartialEq)]
pub struct RagSettings {
    pub k: usize,
    pub response_weight: f64,
    pub store_weighting: StoreWeighting,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Re-ask once for strict JSON before falling back to the keyword scan.
    pub format_retry: bool,
}

impl Default for RagSettings {
    fn default() -> Self {
        Self {
            k: vanhiele_core::index::DEFAULT_K,
            response_weight: DEFAULT_RESPONSE_WEIGHT,
            store_weighting: StoreWeighting::Combined,
            model_id: DEFAULT_CHAT_MODEL.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            format_retry: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    pub level: Level,
    pub rationale: Option<String>,
    pub parse_status: ParseStatus,
    pub retrieved_ids: Vec<String>,
    pub retrieved_scores: Vec<f64>,
    pub variant: PromptVariant,
    pub raw_output: String,
}

/// Retrieves similar annotated pairs, assembles the variant's prompt, asks the model, and
/// parses its answer.
pub struct RagClassifier<'a> {
    pairs: HashMap<&'a str, &'a AnnotatedPair>,
    builder: PromptBuilder,
    gateway: &'a Gateway,
    settings: RagSettings,
    audit_dir: Option<PathBuf>,
}

impl<'a> RagClassifier<'a> {
    pub fn new(corpus: &'a Corpus, builder: PromptBuilder, gateway: &'a Gateway, settings: RagSettings) -> Self {
        let pairs = corpus.pairs().iter().map(|p| (p.id.as_str(), p)).collect();
        Self { pairs, builder, gateway, settings, audit_dir: None }
    }

    /// Writes every rendered prompt and raw reply under `dir`, one file per instance.
    pub fn with_audit_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.audit_dir = Some(dir.into());
        self
    }

    pub fn settings(&self) -> &RagSettings {
        &self.settings
    }

    pub fn variant(&self) -> PromptVariant {
        self.builder.variant()
    }

    pub fn query_vector(&self, question: &EmbeddingVector, response: &EmbeddingVector) -> Result<EmbeddingVector> {
        Ok(weighted_query(question, response, self.settings.response_weight)?)
    }

    /// Classifies `target` against `index`. `audit_name` names the audit file.
    pub fn classify(&self, index: &VectorIndex, query: &EmbeddingVector, target: Target<'_>, pair_id: Option<&str>, audit_name: &str) -> Result<Prediction> {
        let hits = index.top_k(query, self.settings.k)?;
        let retrieved: Vec<(&AnnotatedPair, f64)> = hits
            .iter()
            .map(|hit| {
                self.pairs
                    .get(hit.pair_id.as_str())
                    .map(|p| (*p, hit.score))
                    .ok_or_else(|| Error::Data(format!("index entry {:?} is not in the corpus", hit.pair_id)))
            })
            .collect::<Result<_>>()?;
        let prompt = self.builder.assemble(target, &retrieved);
        let retrieved_levels: Vec<Level> = retrieved.iter().map(|(p, _)| p.level).collect();

        let mut request = CompletionRequest {
            model_id: self.settings.model_id.clone(),
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
            temperature: self.settings.temperature,
            max_output_tokens: self.settings.max_output_tokens,
        };
        let mut raw = self.gateway.complete(&request)?;
        let mut parsed = parse_level(&raw, &retrieved_levels);
        if parsed.status != ParseStatus::Parsed && self.settings.format_retry {
            request.user_text = format!("{}\n\n{raw}\n\n{FORMAT_REMINDER}", prompt.user_text);
            let second = self.gateway.complete(&request)?;
            let reparsed = parse_level(&second, &retrieved_levels);
            if reparsed.status == ParseStatus::Parsed {
                raw = second;
                parsed = reparsed;
            }
        }
        if let Some(dir) = &self.audit_dir {
            write_atomic(&dir.join(format!("{}.txt", sanitize(audit_name))), audit_text(&prompt, &raw).as_bytes())?;
        }
        Ok(Prediction {
            pair_id: pair_id.map(str::to_string),
            level: parsed.level,
            rationale: parsed.rationale,
            parse_status: parsed.status,
            retrieved_ids: prompt.retrieved_ids,
            retrieved_scores: hits.iter().map(|h| h.score).collect(),
            variant: prompt.variant,
            raw_output: raw,
        })
    }
}

fn audit_text(prompt: &AssembledPrompt, raw: &str) -> String {
    format!(
        "variant: {}\nretrieved: {}\n\n===== system =====\n{}\n\n===== user =====\n{}\n\n===== reply =====\n{}\n",
        prompt.variant,
        prompt.retrieved_ids.join(", "),
        prompt.system_text,
        prompt.user_text,
        raw
    )
}

/// File-name-safe form of an id.
pub fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with('.') {
        format!("_{cleaned}")
    } else {
        cleaned
    }
}

//! Unit-norm embedding vectors and the response-weighted query composition.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default share of the response in a weighted query; the question gets the rest.
pub const DEFAULT_RESPONSE_WEIGHT: f64 = 0.8;

/// Weighted sums with a norm at or below this are treated as zero.
const ZERO_NORM: f64 = 1e-9;

/// Which kind of text is being embedded. Backends may map roles to model-specific prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    Question,
    Response,
    Skill,
}

impl TextRole {
    pub fn as_str(self) -> &'static str {
        match self {
            TextRole::Question => "question",
            TextRole::Response => "response",
            TextRole::Skill => "skill",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("empty vector")]
    Empty,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("model mismatch: {left:?} vs {right:?}")]
    ModelMismatch { left: String, right: String },
    #[error("response weight {0} must lie strictly between 0 and 1")]
    Weight(f64),
    #[error("weighted sum is the zero vector")]
    DegenerateCombination,
}

/// An L2-normalized embedding tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    model_id: String,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Zero and non-finite inputs are rejected.
    pub fn normalized(values: &[f32], model_id: impl Into<String>) -> Result<Self, VectorError> {
        let wide: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        Self::normalized_f64(&wide, model_id.into())
    }

    fn normalized_f64(values: &[f64], model_id: String) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        let norm = l2_norm(values);
        if norm <= ZERO_NORM {
            return Err(VectorError::ZeroVector);
        }
        Ok(Self {
            values: values.iter().map(|v| (v / norm) as f32).collect(),
            model_id,
        })
    }

    /// Wraps values that are already unit-norm (e.g. read back from a cache written by this
    /// crate). Fails if the norm is off by more than 1e-5.
    pub fn from_unit(values: Vec<f32>, model_id: impl Into<String>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        let wide: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        if (l2_norm(&wide) - 1.0).abs() > 1e-5 {
            return Err(VectorError::ZeroVector);
        }
        Ok(Self { values, model_id: model_id.into() })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn norm(&self) -> f64 {
        let wide: Vec<f64> = self.values.iter().map(|&v| f64::from(v)).collect();
        l2_norm(&wide)
    }

    /// Dot product; for unit vectors this is the cosine similarity.
    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64, VectorError> {
        self.check_compatible(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn check_compatible(&self, other: &EmbeddingVector) -> Result<(), VectorError> {
        if self.dim() != other.dim() {
            return Err(VectorError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        if self.model_id != other.model_id {
            return Err(VectorError::ModelMismatch {
                left: self.model_id.clone(),
                right: other.model_id.clone(),
            });
        }
        Ok(())
    }
}

/// Sequential f64 dot product over f32 components.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn l2_norm(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum())
}

/// `normalize(w·response + (1 − w)·question)`.
pub fn weighted_query(
    question: &EmbeddingVector,
    response: &EmbeddingVector,
    response_weight: f64,
) -> Result<EmbeddingVector, VectorError> {
    if !(response_weight > 0.0 && response_weight < 1.0) {
        return Err(VectorError::Weight(response_weight));
    }
    question.check_compatible(response)?;
    let question_weight = 1.0 - response_weight;
    let sum: Vec<f64> = question
        .values
        .iter()
        .zip(&response.values)
        .map(|(&q, &r)| response_weight * f64::from(r) + question_weight * f64::from(q))
        .collect();
    EmbeddingVector::normalized_f64(&sum, question.model_id.clone()).map_err(|e| match e {
        VectorError::ZeroVector => VectorError::DegenerateCombination,
        other => other,
    })
}

/// Which vector represents a stored corpus entry in the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreWeighting {
    /// Same response/question weighting as queries.
    #[default]
    Combined,
    ResponseOnly,
    QuestionOnly,
}

/// Question, response, and combined embeddings for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEmbedding {
    pub pair_id: String,
    pub question_vec: EmbeddingVector,
    pub response_vec: EmbeddingVector,
    pub combined_vec: EmbeddingVector,
}

impl PairEmbedding {
    pub fn new(
        pair_id: impl Into<String>,
        question_vec: EmbeddingVector,
        response_vec: EmbeddingVector,
        response_weight: f64,
    ) -> Result<Self, VectorError> {
        let combined_vec = weighted_query(&question_vec, &response_vec, response_weight)?;
        Ok(Self { pair_id: pair_id.into(), question_vec, response_vec, combined_vec })
    }

    pub fn key(&self, weighting: StoreWeighting) -> &EmbeddingVector {
        match weighting {
            StoreWeighting::Combined => &self.combined_vec,
            StoreWeighting::ResponseOnly => &self.response_vec,
            StoreWeighting::QuestionOnly => &self.question_vec,
        }
    }
}

//! Exact top-K cosine retrieval by full scan.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::vector::{dot, EmbeddingVector, PairEmbedding, StoreWeighting, VectorError};

/// Default number of retrieved examples.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index from zero entries")]
    Empty,
    #[error("duplicate pair id {0:?} in index")]
    DuplicateId(String),
    #[error("entry {id:?}: {source}")]
    Incompatible { id: String, source: VectorError },
    #[error("query: {0}")]
    Query(VectorError),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("pair {0:?} is both a query target and an index entry")]
    Leakage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub pair_id: String,
    pub score: f64,
}

/// Immutable collection of unit vectors keyed by pair id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<(String, EmbeddingVector)>,
}

impl VectorIndex {
    pub fn build(embeddings: &[PairEmbedding], weighting: StoreWeighting) -> Result<Self, IndexError> {
        Self::from_entries(
            embeddings
                .iter()
                .map(|e| (e.pair_id.clone(), e.key(weighting).clone()))
                .collect(),
        )
    }

    pub fn from_entries(entries: Vec<(String, EmbeddingVector)>) -> Result<Self, IndexError> {
        let (_, first) = entries.first().ok_or(IndexError::Empty)?;
        let mut seen = BTreeSet::new();
        for (id, vector) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(IndexError::DuplicateId(id.clone()));
            }
            first
                .check_compatible(vector)
                .map_err(|source| IndexError::Incompatible { id: id.clone(), source })?;
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].1.dim()
    }

    pub fn model_id(&self) -> &str {
        self.entries[0].1.model_id()
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.entries.iter().any(|(id, _)| id == pair_id)
    }

    /// Errors if any of `ids` is stored in the index.
    pub fn ensure_excludes<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<(), IndexError> {
        let stored: BTreeSet<&str> = self.entries.iter().map(|(id, _)| id.as_str()).collect();
        for id in ids {
            if stored.contains(id) {
                return Err(IndexError::Leakage(id.into()));
            }
        }
        Ok(())
    }

    /// The `min(k, len)` most similar entries, by score descending then pair id ascending.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalResult>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        self.entries[0].1.check_compatible(query).map_err(IndexError::Query)?;
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .map(|(id, v)| (dot(v.values(), query.values()), id.as_str()))
            .collect();
        let order = |a: &(f64, &str), b: &(f64, &str)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, id)| RetrievalResult { pair_id: id.into(), score })
            .collect())
    }
}

/// Ordering used by [`VectorIndex::top_k`], exposed for callers that merge result lists.
pub fn rank_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.pair_id.cmp(&b.pair_id))
}

//! Seeded, stratified k-fold partitions with stratified validation subsets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedPair;
use crate::level::{Level, LEVEL_COUNT};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_FOLDS: usize = 5;
/// Share of each training set held out for validation.
pub const VALIDATION_SHARE: f64 = 0.15;
pub const FOLD_PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FoldError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{n_folds} folds requested but only {pairs} pairs available")]
    TooFewPairs { n_folds: usize, pairs: usize },
    #[error("fold plan does not cover pair {0:?}")]
    Uncovered(String),
    #[error("fold plan lists unknown or repeated pair {0:?}")]
    Unexpected(String),
    #[error("fold {fold}: validation id {id:?} is not a training id")]
    ValidationOutsideTraining { fold: usize, id: String },
    #[error("unsupported fold plan schema version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldWarning {
    /// A level has fewer pairs than folds, so some test folds will lack it.
    SparseLevel { level: Level, count: usize, n_folds: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    /// Test ids, in corpus order.
    pub test: Vec<String>,
    /// Validation ids drawn from this fold's training set, in corpus order.
    pub validation: Vec<String>,
}

/// A complete cross-validation plan. Serializes to the fold-plan JSON shared with the
/// fine-tuning side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub schema_version: u32,
    pub seed: u64,
    pub n_folds: usize,
    pub validation_share: f64,
    pub folds: Vec<FoldSpec>,
}

/// Partitions `pairs` into `n_folds` folds, stratified by level.
///
/// Within each level, pairs (in corpus order) are shuffled with a ChaCha8 stream seeded by
/// `seed` and dealt round-robin, continuing the deal position across levels. Every level's
/// per-fold counts and the fold sizes therefore differ by at most one.
pub fn make_folds(pairs: &[AnnotatedPair], seed: u64, n_folds: usize) -> Result<(FoldPlan, Vec<FoldWarning>), FoldError> {
    if n_folds < 2 {
        return Err(FoldError::TooFewFolds(n_folds));
    }
    if pairs.len() < n_folds {
        return Err(FoldError::TooFewPairs { n_folds, pairs: pairs.len() });
    }
    let mut by_level: [Vec<usize>; LEVEL_COUNT] = Default::default();
    for (i, pair) in pairs.iter().enumerate() {
        by_level[pair.level.index()].push(i);
    }
    let warnings = Level::ALL
        .iter()
        .zip(&by_level)
        .filter(|(_, members)| !members.is_empty() && members.len() < n_folds)
        .map(|(level, members)| FoldWarning::SparseLevel { level: *level, count: members.len(), n_folds })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = alloc::vec![0usize; pairs.len()];
    let mut deal = 0usize;
    for members in &mut by_level {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = deal % n_folds;
            deal += 1;
        }
    }

    let mut folds: Vec<FoldSpec> = (0..n_folds)
        .map(|f| FoldSpec {
            test: pairs.iter().enumerate().filter(|(i, _)| fold_of[*i] == f).map(|(_, p)| p.id.clone()).collect(),
            validation: Vec::new(),
        })
        .collect();

    for (f, fold) in folds.iter_mut().enumerate() {
        let training: Vec<usize> = (0..pairs.len()).filter(|&i| fold_of[i] != f).collect();
        let chosen = stratified_sample(pairs, &training, &mut rng);
        fold.validation = training.iter().filter(|i| chosen.contains(i)).map(|&i| pairs[i].id.clone()).collect();
    }

    Ok((
        FoldPlan { schema_version: FOLD_PLAN_SCHEMA_VERSION, seed, n_folds, validation_share: VALIDATION_SHARE, folds },
        warnings,
    ))
}

/// Picks `round(share · |training|)` indices, allocated across levels by largest remainder
/// (ties to the lower level) and drawn uniformly within each level.
fn stratified_sample(pairs: &[AnnotatedPair], training: &[usize], rng: &mut ChaCha8Rng) -> BTreeSet<usize> {
    let total = training.len();
    let target = libm::round(VALIDATION_SHARE * total as f64) as usize;
    let mut members: [Vec<usize>; LEVEL_COUNT] = Default::default();
    for &i in training {
        members[pairs[i].level.index()].push(i);
    }
    let exact: [f64; LEVEL_COUNT] = core::array::from_fn(|l| target as f64 * members[l].len() as f64 / total as f64);
    let mut quota: [usize; LEVEL_COUNT] = core::array::from_fn(|l| libm::floor(exact[l]) as usize);
    let mut remaining = target - quota.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..LEVEL_COUNT).collect();
    by_remainder.sort_by(|&a, &b| (exact[b] - quota[b] as f64).total_cmp(&(exact[a] - quota[a] as f64)).then(a.cmp(&b)));
    for l in by_remainder {
        if remaining == 0 {
            break;
        }
        if quota[l] < members[l].len() {
            quota[l] += 1;
            remaining -= 1;
        }
    }
    let mut chosen = BTreeSet::new();
    for (l, group) in members.iter_mut().enumerate() {
        group.shuffle(rng);
        chosen.extend(group.iter().take(quota[l]).copied());
    }
    chosen
}

impl FoldPlan {
    pub fn test_ids(&self, fold: usize) -> &[String] {
        &self.folds[fold].test
    }

    pub fn validation_ids(&self, fold: usize) -> &[String] {
        &self.folds[fold].validation
    }

    /// Every id outside `fold`, in fold order.
    pub fn training_ids(&self, fold: usize) -> Vec<&str> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, spec)| spec.test.iter().map(String::as_str))
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.folds.iter().map(|f| f.test.len()).collect()
    }

    /// pair id → fold index.
    pub fn assignments(&self) -> BTreeMap<&str, usize> {
        self.folds
            .iter()
            .enumerate()
            .flat_map(|(f, spec)| spec.test.iter().map(move |id| (id.as_str(), f)))
            .collect()
    }

    /// `counts[fold][level index]`.
    pub fn level_counts(&self, pairs: &[AnnotatedPair]) -> Vec<[usize; LEVEL_COUNT]> {
        let level_of: BTreeMap<&str, Level> = pairs.iter().map(|p| (p.id.as_str(), p.level)).collect();
        self.folds
            .iter()
            .map(|spec| {
                let mut counts = [0; LEVEL_COUNT];
                for id in &spec.test {
                    if let Some(level) = level_of.get(id.as_str()) {
                        counts[level.index()] += 1;
                    }
                }
                counts
            })
            .collect()
    }

    /// Checks that the plan partitions exactly `pairs` and that validation sets sit inside
    /// their training sets. Used when a plan is read back from disk.
    pub fn check_against(&self, pairs: &[AnnotatedPair]) -> Result<(), FoldError> {
        if self.schema_version != FOLD_PLAN_SCHEMA_VERSION {
            return Err(FoldError::Schema(self.schema_version));
        }
        if self.n_folds < 2 || self.folds.len() != self.n_folds {
            return Err(FoldError::TooFewFolds(self.folds.len()));
        }
        let mut expected: BTreeSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        for spec in &self.folds {
            for id in &spec.test {
                if !expected.remove(id.as_str()) {
                    return Err(FoldError::Unexpected(id.clone()));
                }
            }
        }
        if let Some(id) = expected.into_iter().next() {
            return Err(FoldError::Uncovered(id.into()));
        }
        for (fold, spec) in self.folds.iter().enumerate() {
            let test: BTreeSet<&str> = spec.test.iter().map(String::as_str).collect();
            if let Some(id) = spec.validation.iter().find(|id| test.contains(id.as_str())) {
                return Err(FoldError::ValidationOutsideTraining { fold, id: id.clone() });
            }
        }
        Ok(())
    }
}

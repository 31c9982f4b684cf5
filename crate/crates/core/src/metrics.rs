//! Ordinal classification metrics over the fixed label set 1–5.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::level::{Level, LEVEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("truth and prediction lengths differ ({truth} vs {pred})")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("cannot score an empty sequence")]
    Empty,
    #[error("quadratic weighted kappa is undefined: expected disagreement is zero but observed is not")]
    DegenerateKappa,
}

fn check(truth: &[Level], pred: &[Level]) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Rows are true levels, columns predicted levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; LEVEL_COUNT]; LEVEL_COUNT],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[Level], pred: &[Level]) -> Result<Self, MetricError> {
        check(truth, pred)?;
        let mut m = Self::default();
        for (t, p) in truth.iter().zip(pred) {
            m.record(*t, *p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: Level, pred: Level) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, truth: Level) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn column_total(&self, pred: Level) -> u64 {
        self.counts.iter().map(|row| row[pred.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub f1_macro: f64,
    pub f1_weighted: f64,
    /// Indexed by level; classes absent from both sequences score zero.
    pub per_class: [ClassScore; LEVEL_COUNT],
}

/// Per-class F1 with 0 when precision and recall are both 0. The macro average covers the
/// levels present in `truth`; the weighted average weights by true support.
pub fn f1_scores(truth: &[Level], pred: &[Level]) -> Result<F1Scores, MetricError> {
    Ok(f1_from_confusion(&ConfusionMatrix::from_pairs(truth, pred)?))
}

pub fn f1_from_confusion(m: &ConfusionMatrix) -> F1Scores {
    let mut per_class = [ClassScore::default(); LEVEL_COUNT];
    for level in Level::ALL {
        let tp = m.counts[level.index()][level.index()] as f64;
        let support = m.row_total(level);
        let predicted = m.column_total(level);
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class[level.index()] = ClassScore { precision, recall, f1, support };
    }
    let present: Vec<&ClassScore> = per_class.iter().filter(|c| c.support > 0).collect();
    let total: u64 = present.iter().map(|c| c.support).sum();
    let f1_macro = if present.is_empty() { 0.0 } else { present.iter().map(|c| c.f1).sum::<f64>() / present.len() as f64 };
    let f1_weighted = if total == 0 { 0.0 } else { present.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64 };
    F1Scores { f1_macro, f1_weighted, per_class }
}

/// Mean absolute level distance.
pub fn mae(truth: &[Level], pred: &[Level]) -> Result<f64, MetricError> {
    check(truth, pred)?;
    let total: u64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| u64::from(t.value().abs_diff(p.value())))
        .sum();
    Ok(total as f64 / truth.len() as f64)
}

pub fn mae_from_confusion(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    let n = m.total();
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let mut total = 0u64;
    for (i, row) in m.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            total += c * i.abs_diff(j) as u64;
        }
    }
    Ok(total as f64 / n as f64)
}

/// Quadratic weighted kappa over the fixed label set 1–5.
pub fn qwk(truth: &[Level], pred: &[Level]) -> Result<f64, MetricError> {
    qwk_from_confusion(&ConfusionMatrix::from_pairs(truth, pred)?)
}

pub fn qwk_from_confusion(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    let n = m.total();
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let n = n as f64;
    let truth_marginal: [f64; LEVEL_COUNT] = Level::ALL.map(|l| m.row_total(l) as f64 / n);
    let pred_marginal: [f64; LEVEL_COUNT] = Level::ALL.map(|l| m.column_total(l) as f64 / n);
    let span = ((LEVEL_COUNT - 1) * (LEVEL_COUNT - 1)) as f64;
    let (mut observed, mut expected) = (0.0, 0.0);
    for (i, (row, t)) in m.counts.iter().zip(truth_marginal).enumerate() {
        for (j, (&count, p)) in row.iter().zip(pred_marginal).enumerate() {
            let w = (i.abs_diff(j) * i.abs_diff(j)) as f64 / span;
            observed += w * count as f64 / n;
            expected += w * t * p;
        }
    }
    if expected == 0.0 {
        return if observed == 0.0 { Ok(1.0) } else { Err(MetricError::DegenerateKappa) };
    }
    Ok(1.0 - observed / expected)
}

/// The four per-fold metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub mae: f64,
    pub qwk: f64,
}

impl FoldMetrics {
    pub fn compute(truth: &[Level], pred: &[Level]) -> Result<Self, MetricError> {
        let m = ConfusionMatrix::from_pairs(truth, pred)?;
        let f1 = f1_from_confusion(&m);
        Ok(Self {
            f1_macro: f1.f1_macro,
            f1_weighted: f1.f1_weighted,
            mae: mae_from_confusion(&m)?,
            qwk: qwk_from_confusion(&m)?,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::F1Macro => self.f1_macro,
            Metric::F1Weighted => self.f1_weighted,
            Metric::Mae => self.mae,
            Metric::Qwk => self.qwk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1Macro,
    F1Weighted,
    Mae,
    Qwk,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::F1Macro, Metric::F1Weighted, Metric::Qwk, Metric::Mae];

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1Macro => "f1_macro",
            Metric::F1Weighted => "f1_weighted",
            Metric::Mae => "mae",
            Metric::Qwk => "qwk",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Self::ALL.into_iter().find(|m| m.name() == s.replace('-', "_"))
    }

    /// Whether a larger value is better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mae)
    }
}

/// Row-normalized outcome for one true level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LevelOutcome {
    NoSupport,
    Scored {
        support: u64,
        accuracy: f64,
        /// Share of this level's instances predicted as each level.
        distribution: [f64; LEVEL_COUNT],
    },
}

impl LevelOutcome {
    pub fn accuracy(&self) -> Option<f64> {
        match self {
            LevelOutcome::NoSupport => None,
            LevelOutcome::Scored { accuracy, .. } => Some(*accuracy),
        }
    }
}

/// Per-level recall and full misclassification distribution, indexed by level.
pub fn per_level_report(m: &ConfusionMatrix) -> [LevelOutcome; LEVEL_COUNT] {
    Level::ALL.map(|level| {
        let support = m.row_total(level);
        if support == 0 {
            return LevelOutcome::NoSupport;
        }
        let row = &m.counts[level.index()];
        let distribution = core::array::from_fn(|j| row[j] as f64 / support as f64);
        LevelOutcome::Scored { support, accuracy: distribution[level.index()], distribution }
    })
}

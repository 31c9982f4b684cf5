//! The metrics report shared by both classification methods, and paired comparison of reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::level::Level;
use crate::metrics::{per_level_report, ConfusionMatrix, FoldMetrics, LevelOutcome, Metric};
use crate::parse::ParseStatus;
use crate::prompt::PromptVariant;
use crate::stats::{mean, paired_ttest, sample_std, StatsError, TTest};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rag,
    Mtl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub fold: usize,
    pub n_test: usize,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub mae: f64,
    pub qwk: f64,
    #[serde(default)]
    pub parse_failures: u64,
}

impl FoldEntry {
    pub fn new(fold: usize, n_test: usize, metrics: FoldMetrics, parse_failures: u64) -> Self {
        Self {
            fold,
            n_test,
            f1_macro: metrics.f1_macro,
            f1_weighted: metrics.f1_weighted,
            mae: metrics.mae,
            qwk: metrics.qwk,
            parse_failures,
        }
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        Self { mean: mean(values), std: sample_std(values) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub f1_macro: MeanStd,
    pub f1_weighted: MeanStd,
    pub qwk: MeanStd,
    pub mae: MeanStd,
}

impl Summary {
    pub fn of(folds: &[FoldEntry]) -> Self {
        let col = |m: Metric| MeanStd::of(&folds.iter().map(|f| f.get(m)).collect::<Vec<_>>());
        Self {
            f1_macro: col(Metric::F1Macro),
            f1_weighted: col(Metric::F1Weighted),
            qwk: col(Metric::Qwk),
            mae: col(Metric::Mae),
        }
    }

    pub fn get(&self, metric: Metric) -> MeanStd {
        match metric {
            Metric::F1Macro => self.f1_macro,
            Metric::F1Weighted => self.f1_weighted,
            Metric::Mae => self.mae,
            Metric::Qwk => self.qwk,
        }
    }
}

/// How the raw outputs of a run were parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseCounts {
    pub parsed: u64,
    pub fallback_regex: u64,
    pub fallback_majority: u64,
}

impl ParseCounts {
    pub fn record(&mut self, status: ParseStatus) {
        match status {
            ParseStatus::Parsed => self.parsed += 1,
            ParseStatus::FallbackRegex => self.fallback_regex += 1,
            ParseStatus::FallbackMajority => self.fallback_majority += 1,
        }
    }

    /// Outputs that were not strict JSON.
    pub fn failures(&self) -> u64 {
        self.fallback_regex + self.fallback_majority
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub method: Method,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_variant: Option<PromptVariant>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub n_folds: usize,
    pub fold_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_plan_sha256: Option<String>,
    pub per_fold: Vec<FoldEntry>,
    pub summary: Summary,
    /// Pooled over all scored folds.
    pub confusion: ConfusionMatrix,
    /// Keyed by level value "1".."5".
    pub per_level: BTreeMap<String, LevelOutcome>,
    pub parse_failures: u64,
    #[serde(default)]
    pub parse_counts: ParseCounts,
    /// Seconds since the Unix epoch; excluded from reproducibility comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

/// Identity of a run, everything in a report besides the numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub method: Method,
    pub variant: String,
    pub prompt_variant: Option<PromptVariant>,
    pub n_folds: usize,
    pub fold_seed: u64,
    pub fold_plan_sha256: Option<String>,
}

impl MetricsReport {
    /// Aggregates per-fold results. A run with fewer scored folds than planned is `Failed`.
    pub fn assemble(
        header: ReportHeader,
        per_fold: Vec<FoldEntry>,
        confusion: ConfusionMatrix,
        parse_counts: ParseCounts,
        failure: Option<String>,
    ) -> Self {
        let status = if failure.is_none() && per_fold.len() == header.n_folds {
            RunStatus::Complete
        } else {
            RunStatus::Failed
        };
        let per_level = Level::ALL
            .iter()
            .zip(per_level_report(&confusion))
            .map(|(level, outcome)| (level.value().to_string(), outcome))
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: header.method,
            variant: header.variant,
            prompt_variant: header.prompt_variant,
            status,
            failure,
            n_folds: header.n_folds,
            fold_seed: header.fold_seed,
            fold_plan_sha256: header.fold_plan_sha256,
            summary: Summary::of(&per_fold),
            per_fold,
            confusion,
            per_level,
            parse_failures: parse_counts.failures(),
            parse_counts,
            generated_at: None,
        }
    }

    /// Largest gap between the stored summary and one recomputed from `per_fold`.
    pub fn summary_drift(&self) -> f64 {
        let fresh = Summary::of(&self.per_fold);
        Metric::ALL
            .iter()
            .flat_map(|&m| {
                let (a, b) = (self.summary.get(m), fresh.get(m));
                [(a.mean - b.mean).abs(), (a.std - b.std).abs()]
            })
            .fold(0.0, f64::max)
    }

    pub fn fold_values(&self, metric: Metric) -> Vec<f64> {
        let mut folds: Vec<&FoldEntry> = self.per_fold.iter().collect();
        folds.sort_by_key(|f| f.fold);
        folds.into_iter().map(|f| f.get(metric)).collect()
    }

    /// One-line summary: `variant  F1-macro m ± s  F1-weighted …  QWK …  MAE …`.
    pub fn table_row(&self) -> String {
        let cell = |m: MeanStd| format!("{:.3} ± {:.3}", m.mean, m.std);
        format!(
            "{:<16} F1-macro {}  F1-weighted {}  QWK {}  MAE {}",
            self.variant,
            cell(self.summary.f1_macro),
            cell(self.summary.f1_weighted),
            cell(self.summary.qwk),
            cell(self.summary.mae)
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("reports use different fold plans ({0}); paired tests would be invalid")]
    FoldPlanMismatch(String),
    #[error("report {which} is incomplete ({have} of {want} folds)")]
    Incomplete { which: char, have: usize, want: usize },
    #[error("{metric}: {source}")]
    Stats { metric: &'static str, source: StatsError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: TTest,
}

impl Comparison {
    /// e.g. `f1_macro: t(4) = 2.909, p = 0.0437`.
    pub fn line(&self) -> String {
        let t = self.test.t_statistic;
        let t_text = if t.is_finite() { format!("{t:.3}") } else if t > 0.0 { "inf".into() } else { "-inf".into() };
        let mut out = format!(
            "{}: t({}) = {}, p = {:.4}  (mean a = {:.3}, mean b = {:.3})",
            self.metric.name(),
            self.test.degrees_of_freedom,
            t_text,
            self.test.p_value,
            self.mean_a,
            self.mean_b
        );
        if self.test.degenerate {
            out.push_str("  [degenerate: zero-variance differences]");
        }
        out
    }
}

/// Paired t-tests of `a − b` per metric, pairing folds by index.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport, metrics: &[Metric]) -> Result<Vec<Comparison>, CompareError> {
    if a.n_folds != b.n_folds {
        return Err(CompareError::FoldPlanMismatch(format!("{} vs {} folds", a.n_folds, b.n_folds)));
    }
    if a.fold_seed != b.fold_seed {
        return Err(CompareError::FoldPlanMismatch(format!("seed {} vs {}", a.fold_seed, b.fold_seed)));
    }
    if let (Some(x), Some(y)) = (&a.fold_plan_sha256, &b.fold_plan_sha256) {
        if x != y {
            return Err(CompareError::FoldPlanMismatch("fold assignments differ".into()));
        }
    }
    for (which, report) in [('a', a), ('b', b)] {
        if report.per_fold.len() != report.n_folds {
            return Err(CompareError::Incomplete { which, have: report.per_fold.len(), want: report.n_folds });
        }
    }
    metrics
        .iter()
        .map(|&metric| {
            let (xa, xb) = (a.fold_values(metric), b.fold_values(metric));
            let test = paired_ttest(&xa, &xb).map_err(|source| CompareError::Stats { metric: metric.name(), source })?;
            Ok(Comparison { metric, mean_a: mean(&xa), mean_b: mean(&xb), test })
        })
        .collect()
}

//! Cross-validation driver: runs a method fold by fold and assembles the shared report.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vanhiele_core::corpus::{AnnotatedPair, Corpus};
use vanhiele_core::folds::FoldPlan;
use vanhiele_core::index::VectorIndex;
use vanhiele_core::level::Level;
use vanhiele_core::metrics::{ConfusionMatrix, FoldMetrics};
use vanhiele_core::prompt::{PromptVariant, Target};
use vanhiele_core::report::{FoldEntry, Method, MetricsReport, ParseCounts, ReportHeader};
use vanhiele_core::vector::{PairEmbedding, StoreWeighting};

use crate::error::{Error, Result};
use crate::io::{self, fold_plan_sha256, write_atomic, write_json};
use crate::pipeline::{Prediction, RagClassifier};

/// Produces predictions for one test fold, aligned with `plan.test_ids(fold)`.
pub trait FoldRunner: Sync {
    fn method(&self) -> Method;
    fn variant(&self) -> String;
    fn prompt_variant(&self) -> Option<PromptVariant>;
    fn run_fold(&self, plan: &FoldPlan, fold: usize, corpus: &Corpus) -> Result<Vec<Prediction>>;
}

/// The retrieval-augmented method: per fold, an index over the training folds and one
/// classification per test pair.
pub struct RagRunner<'a> {
    classifier: RagClassifier<'a>,
    embeddings: HashMap<String, PairEmbedding>,
    store_weighting: StoreWeighting,
    exclude_validation: bool,
    pool: rayon::ThreadPool,
}

impl<'a> RagRunner<'a> {
    /// `embeddings` must cover every corpus pair. `parallelism` bounds concurrent requests.
    pub fn new(classifier: RagClassifier<'a>, embeddings: Vec<PairEmbedding>, exclude_validation: bool, parallelism: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let store_weighting = classifier.settings().store_weighting;
        let embeddings = embeddings.into_iter().map(|e| (e.pair_id.clone(), e)).collect();
        Ok(Self { classifier, embeddings, store_weighting, exclude_validation, pool })
    }

    fn embedding(&self, id: &str) -> Result<&PairEmbedding> {
        self.embeddings.get(id).ok_or_else(|| Error::Data(format!("no embedding for pair {id:?}")))
    }

    /// The retrieval pool for `fold`: its training ids, minus validation ids when configured.
    /// Fails if any test id would be retrievable.
    pub fn fold_index(&self, plan: &FoldPlan, fold: usize) -> Result<VectorIndex> {
        let validation: Vec<&str> = if self.exclude_validation { plan.validation_ids(fold).iter().map(String::as_str).collect() } else { Vec::new() };
        let pool: Vec<PairEmbedding> = plan
            .training_ids(fold)
            .into_iter()
            .filter(|id| !validation.contains(id))
            .map(|id| self.embedding(id).cloned())
            .collect::<Result<_>>()?;
        let index = VectorIndex::build(&pool, self.store_weighting)?;
        index.ensure_excludes(plan.test_ids(fold).iter().map(String::as_str))?;
        Ok(index)
    }
}

impl FoldRunner for RagRunner<'_> {
    fn method(&self) -> Method {
        Method::Rag
    }

    fn variant(&self) -> String {
        self.classifier.variant().name().to_string()
    }

    fn prompt_variant(&self) -> Option<PromptVariant> {
        Some(self.classifier.variant())
    }

    fn run_fold(&self, plan: &FoldPlan, fold: usize, corpus: &Corpus) -> Result<Vec<Prediction>> {
        let index = self.fold_index(plan, fold)?;
        let test: Vec<&AnnotatedPair> = plan
            .test_ids(fold)
            .iter()
            .map(|id| corpus.get(id).ok_or_else(|| Error::Data(format!("fold plan names unknown pair {id:?}"))))
            .collect::<Result<_>>()?;
        self.pool.install(|| {
            test.par_iter()
                .map(|pair| {
                    let e = self.embedding(&pair.id)?;
                    let query = self.classifier.query_vector(&e.question_vec, &e.response_vec)?;
                    let target = Target { question: &pair.question, response: &pair.response };
                    self.classifier.classify(&index, &query, target, Some(&pair.id), &format!("fold{fold}-{}", pair.id))
                })
                .collect()
        })
    }
}

/// One scored prediction as written to `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub fold: usize,
    pub truth: Level,
    #[serde(flatten)]
    pub prediction: Prediction,
}

pub struct CrossValidation {
    pub report: MetricsReport,
    pub predictions: Vec<ScoredPrediction>,
    /// Set when a fold failed; `report` then holds the folds completed before it.
    pub error: Option<Error>,
}

/// Runs every fold in order, scoring each on its own and pooling the confusion matrix.
/// Stops at the first failing fold and keeps what was scored before it.
pub fn run_cross_validation(runner: &dyn FoldRunner, corpus: &Corpus, plan: &FoldPlan) -> CrossValidation {
    let header = ReportHeader {
        method: runner.method(),
        variant: runner.variant(),
        prompt_variant: runner.prompt_variant(),
        n_folds: plan.n_folds,
        fold_seed: plan.seed,
        fold_plan_sha256: Some(fold_plan_sha256(plan)),
    };
    let mut per_fold = Vec::new();
    let mut confusion = ConfusionMatrix::default();
    let mut counts = ParseCounts::default();
    let mut scored = Vec::new();
    let mut error = None;
    for fold in 0..plan.n_folds {
        match score_fold(runner, corpus, plan, fold) {
            Ok((entry, fold_confusion, fold_counts, predictions)) => {
                tracing::info!(fold, f1_macro = entry.f1_macro, qwk = entry.qwk, "fold scored");
                per_fold.push(entry);
                confusion.merge(&fold_confusion);
                counts.parsed += fold_counts.parsed;
                counts.fallback_regex += fold_counts.fallback_regex;
                counts.fallback_majority += fold_counts.fallback_majority;
                scored.extend(predictions);
            }
            Err(e) => {
                tracing::error!(fold, error = %e, "fold failed");
                error = Some(e);
                break;
            }
        }
    }
    let failure = error.as_ref().map(|e| e.to_string());
    let report = MetricsReport::assemble(header, per_fold, confusion, counts, failure);
    CrossValidation { report, predictions: scored, error }
}

type FoldScore = (FoldEntry, ConfusionMatrix, ParseCounts, Vec<ScoredPrediction>);

fn score_fold(runner: &dyn FoldRunner, corpus: &Corpus, plan: &FoldPlan, fold: usize) -> Result<FoldScore> {
    let ids = plan.test_ids(fold);
    let predictions = runner.run_fold(plan, fold, corpus)?;
    if predictions.len() != ids.len() {
        return Err(Error::Data(format!("fold {fold}: {} predictions for {} test pairs", predictions.len(), ids.len())));
    }
    let mut truth = Vec::with_capacity(ids.len());
    let mut counts = ParseCounts::default();
    let mut scored = Vec::with_capacity(ids.len());
    for (id, prediction) in ids.iter().zip(predictions) {
        let pair = corpus.get(id).ok_or_else(|| Error::Data(format!("fold plan names unknown pair {id:?}")))?;
        truth.push(pair.level);
        counts.record(prediction.parse_status);
        scored.push(ScoredPrediction { fold, truth: pair.level, prediction });
    }
    let pred: Vec<Level> = scored.iter().map(|s| s.prediction.level).collect();
    let metrics = FoldMetrics::compute(&truth, &pred).map_err(|e| Error::Data(format!("fold {fold}: {e}")))?;
    let confusion = ConfusionMatrix::from_pairs(&truth, &pred).map_err(|e| Error::Data(format!("fold {fold}: {e}")))?;
    Ok((FoldEntry::new(fold, ids.len(), metrics, counts.failures()), confusion, counts, scored))
}

/// Reads a report produced elsewhere (for example by the fine-tuning side) and checks that
/// it was scored on `plan`.
pub fn import_external_report(path: &Path, plan: &FoldPlan) -> Result<MetricsReport> {
    let report = io::load_report(path)?;
    if report.n_folds != plan.n_folds || report.fold_seed != plan.seed {
        return Err(Error::Data(format!(
            "{}: report uses {} folds with seed {}, plan has {} folds with seed {}",
            path.display(),
            report.n_folds,
            report.fold_seed,
            plan.n_folds,
            plan.seed
        )));
    }
    if let Some(hash) = &report.fold_plan_sha256 {
        if *hash != fold_plan_sha256(plan) {
            return Err(Error::Data(format!("{}: report was scored on a different fold plan", path.display())));
        }
    }
    Ok(report)
}

/// Files written by one evaluation run.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub report: PathBuf,
    pub per_fold_csv: PathBuf,
    pub confusion_csv: PathBuf,
    pub fold_plan: PathBuf,
    pub predictions: PathBuf,
    pub resolved_config: PathBuf,
}

impl RunOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            report: dir.join("report.json"),
            per_fold_csv: dir.join("per_fold.csv"),
            confusion_csv: dir.join("confusion.csv"),
            fold_plan: dir.join("fold_plan.json"),
            predictions: dir.join("predictions.jsonl"),
            resolved_config: dir.join("resolved_config.toml"),
        }
    }

    /// Writes everything; stamps the report with the current time.
    pub fn write(&self, cv: &CrossValidation, plan: &FoldPlan, resolved_config: &str) -> Result<MetricsReport> {
        let mut report = cv.report.clone();
        report.generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        write_atomic(&self.resolved_config, resolved_config.as_bytes())?;
        write_json(&self.fold_plan, plan)?;
        let mut lines = String::new();
        for p in &cv.predictions {
            lines.push_str(&serde_json::to_string(p).expect("predictions serialize"));
            lines.push('\n');
        }
        write_atomic(&self.predictions, lines.as_bytes())?;
        write_atomic(&self.per_fold_csv, io::per_fold_csv(&report).as_bytes())?;
        write_atomic(&self.confusion_csv, io::confusion_csv(&report).as_bytes())?;
        write_json(&self.report, &report)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RetryPolicy;
    use crate::embedding::{Embedder, HashEmbedder};
    use crate::llm::{EchoChat, Gateway, ScriptedChat};
    use crate::pipeline::RagSettings;
    use crate::synthetic;
    use vanhiele_core::folds::{make_folds, FoldSpec};
    use vanhiele_core::prompt::{PromptBuilder, PromptTemplates};
    use vanhiele_core::report::RunStatus;

    fn setup(counts: [usize; 5]) -> (Corpus, FoldPlan, Vec<PairEmbedding>) {
        let corpus = synthetic::corpus(&synthetic::dictionary(), counts, 5);
        let (plan, _) = make_folds(corpus.pairs(), 42, 5).unwrap();
        let embedder = Embedder::new(Box::new(HashEmbedder::new(64)), None, RetryPolicy::default());
        let embeddings = embedder.embed_pairs(corpus.pairs(), 0.8).unwrap();
        (corpus, plan, embeddings)
    }

    fn runner<'a>(corpus: &'a Corpus, gateway: &'a Gateway, embeddings: Vec<PairEmbedding>, exclude_validation: bool) -> RagRunner<'a> {
        let builder = PromptBuilder::new(corpus.dictionary(), PromptVariant::SkillsAware, PromptTemplates::default()).unwrap();
        let classifier = RagClassifier::new(corpus, builder, gateway, RagSettings::default());
        RagRunner::new(classifier, embeddings, exclude_validation, 3).unwrap()
    }

    #[test]
    fn echo_backend_scores_perfectly() {
        let (corpus, plan, embeddings) = setup([5, 8, 7, 5, 5]);
        let gateway = Gateway::new(Box::new(EchoChat::new(corpus.pairs())), None, RetryPolicy::default());
        let cv = run_cross_validation(&runner(&corpus, &gateway, embeddings, false), &corpus, &plan);
        assert!(cv.error.is_none());
        let r = &cv.report;
        assert_eq!(r.status, RunStatus::Complete);
        assert_eq!((r.summary.f1_macro.mean, r.summary.f1_weighted.mean, r.summary.qwk.mean, r.summary.mae.mean), (1.0, 1.0, 1.0, 0.0));
        assert_eq!(r.confusion.total(), corpus.len() as u64);
        assert_eq!(cv.predictions.len(), corpus.len());
        assert_eq!(r.parse_failures, 0);
        assert_eq!(r.fold_plan_sha256.as_deref(), Some(fold_plan_sha256(&plan).as_str()));
    }

    #[test]
    fn retrieval_pool_excludes_test_and_optionally_validation() {
        let (corpus, plan, embeddings) = setup([5, 8, 7, 5, 5]);
        let gateway = Gateway::new(Box::new(ScriptedChat::new(["{\"level\": 1}"])), None, RetryPolicy::default());
        let with_val = runner(&corpus, &gateway, embeddings.clone(), false);
        let without_val = runner(&corpus, &gateway, embeddings, true);
        for fold in 0..plan.n_folds {
            let a = with_val.fold_index(&plan, fold).unwrap();
            let b = without_val.fold_index(&plan, fold).unwrap();
            assert_eq!(a.len(), corpus.len() - plan.test_ids(fold).len());
            assert_eq!(b.len(), a.len() - plan.validation_ids(fold).len());
            assert!(plan.test_ids(fold).iter().all(|id| !a.contains(id)));
            assert!(plan.validation_ids(fold).iter().all(|id| a.contains(id) && !b.contains(id)));
        }
    }

    #[test]
    fn leakage_aborts_the_run() {
        let (corpus, mut plan, embeddings) = setup([5, 8, 7, 5, 5]);
        let stolen = plan.folds[1].test[0].clone();
        plan.folds[0].test.push(stolen);
        let gateway = Gateway::new(Box::new(EchoChat::new(corpus.pairs())), None, RetryPolicy::default());
        let r = runner(&corpus, &gateway, embeddings, false);
        assert!(matches!(r.fold_index(&plan, 0), Err(Error::Index(_))));
        let cv = run_cross_validation(&r, &corpus, &plan);
        assert!(matches!(cv.error, Some(Error::Index(_))));
        assert_eq!(cv.report.status, RunStatus::Failed);
        assert!(cv.report.per_fold.is_empty());
    }

    struct FailsAt(usize);

    impl FoldRunner for FailsAt {
        fn method(&self) -> Method {
            Method::Rag
        }
        fn variant(&self) -> String {
            "test".into()
        }
        fn prompt_variant(&self) -> Option<PromptVariant> {
            None
        }
        fn run_fold(&self, plan: &FoldPlan, fold: usize, corpus: &Corpus) -> Result<Vec<Prediction>> {
            if fold == self.0 {
                return Err(Error::Backend(crate::backend::BackendError::Empty));
            }
            Ok(plan
                .test_ids(fold)
                .iter()
                .map(|id| Prediction {
                    pair_id: Some(id.clone()),
                    level: corpus.get(id).unwrap().level,
                    rationale: None,
                    parse_status: vanhiele_core::parse::ParseStatus::Parsed,
                    retrieved_ids: Vec::new(),
                    retrieved_scores: Vec::new(),
                    variant: PromptVariant::Baseline,
                    raw_output: String::new(),
                })
                .collect())
        }
    }

    #[test]
    fn failure_keeps_completed_folds() {
        let (corpus, plan, _) = setup([5, 8, 7, 5, 5]);
        let cv = run_cross_validation(&FailsAt(3), &corpus, &plan);
        assert_eq!(cv.report.per_fold.len(), 3);
        assert_eq!(cv.report.status, RunStatus::Failed);
        assert!(cv.report.failure.as_deref().unwrap().contains("empty"));
        assert_eq!(cv.error.unwrap().exit_code(), crate::error::exit::BACKEND);
    }

    #[test]
    fn outputs_and_external_import() {
        let (corpus, plan, _) = setup([5, 8, 7, 5, 5]);
        let cv = run_cross_validation(&FailsAt(usize::MAX), &corpus, &plan);
        let dir = tempfile::tempdir().unwrap();
        let outputs = RunOutputs::in_dir(dir.path());
        let written = outputs.write(&cv, &plan, "seed = 42\n").unwrap();
        assert!(written.generated_at.is_some());
        let back = import_external_report(&outputs.report, &plan).unwrap();
        assert_eq!(back, written);
        let per_fold = std::fs::read_to_string(&outputs.per_fold_csv).unwrap();
        assert_eq!(per_fold.lines().count(), 6);
        let lines = std::fs::read_to_string(&outputs.predictions).unwrap();
        let first: ScoredPrediction = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(first.fold, 0);

        let (other, _) = make_folds(corpus.pairs(), 42, 5).map(|(mut p, w)| {
            p.folds.rotate_left(1);
            (p, w)
        }).unwrap();
        assert!(import_external_report(&outputs.report, &other).is_err());
        let fewer = FoldPlan { n_folds: 2, folds: vec![FoldSpec { test: vec![], validation: vec![] }; 2], ..plan.clone() };
        assert!(import_external_report(&outputs.report, &fewer).is_err());
    }
}

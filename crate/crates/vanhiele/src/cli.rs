//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use vanhiele_core::corpus::{Corpus, LoadSummary};
use vanhiele_core::folds::{make_folds, FoldPlan, FoldWarning};
use vanhiele_core::index::VectorIndex;
use vanhiele_core::level::Level;
use vanhiele_core::metrics::Metric;
use vanhiele_core::prompt::{PromptBuilder, Target, VariantKind};
use vanhiele_core::report::compare_reports;
use vanhiele_core::skills::SkillsDictionary;
use vanhiele_core::vector::{PairEmbedding, StoreWeighting, TextRole};

use crate::config::{ChatBackendKind, EmbeddingBackendKind, RunConfig};
use crate::error::{exit, Error, Result};
use crate::evaluate::{run_cross_validation, RagRunner, RunOutputs};
use crate::io;
use crate::pipeline::RagClassifier;
use crate::snapshot;

#[derive(Debug, Parser)]
#[command(name = "vanhiele", version, about = "Skills-aware Van Hiele level classification")]
pub struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the dictionary and pairs file; print the level distribution.
    Validate(DataArgs),
    /// Embed every question, response, and skill definition into the cache.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Also write an index snapshot over all pairs.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Classify one question–response pair given as a JSON file.
    Classify {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// JSON object with `question`, `response`, and optionally `id`.
        #[arg(long)]
        pair: PathBuf,
    },
    /// Cross-validate the retrieval-augmented classifier and write a report.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Paired t-tests between two reports scored on the same folds.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        /// Metrics to test (f1_macro, f1_weighted, qwk, mae); all by default.
        #[arg(long = "metric", value_parser = parse_metric)]
        metrics: Vec<Metric>,
        /// Print JSON instead of text lines.
        #[arg(long)]
        json: bool,
    },
    /// Write interchange files.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Debug, Subcommand)]
pub enum ExportCommand {
    /// The stratified fold plan for the corpus.
    FoldPlan {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// The validated corpus, re-serialized as pairs JSONL.
    Pairs {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// A synthetic corpus over the bundled dictionary with a typical level mix.
    Synthetic {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The bundled skills dictionary.
    Dictionary {
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-fold and confusion-matrix CSV files for a report.
    Csv {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Pairs file (JSON Lines).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Skills dictionary (JSON).
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Skip invalid records and accept dictionaries of any size.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<VariantKind>,
    /// Seed for the noisy-skills derangement (required with that variant).
    #[arg(long)]
    pub derangement_seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub response_weight: Option<f64>,
    #[arg(long, value_parser = parse_store_weighting)]
    pub store_weighting: Option<StoreWeighting>,
    #[arg(long)]
    pub exclude_validation_from_retrieval: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Reuse this fold plan instead of generating one.
    #[arg(long)]
    pub fold_plan: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, value_enum)]
    pub embedding_backend: Option<EmbeddingBackendKind>,
    #[arg(long)]
    pub embedding_model: Option<String>,
    #[arg(long)]
    pub embedding_endpoint: Option<String>,
    #[arg(long)]
    pub embedding_cache: Option<PathBuf>,
    #[arg(long)]
    pub hash_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub llm_backend: Option<ChatBackendKind>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub llm_endpoint: Option<String>,
    #[arg(long)]
    pub completion_cache: Option<PathBuf>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Reply for the scripted backend (repeat for a sequence).
    #[arg(long = "scripted-reply")]
    pub scripted_replies: Vec<String>,
    /// Write every rendered prompt here.
    #[arg(long)]
    pub prompts_dir: Option<PathBuf>,
    #[arg(long)]
    pub templates_dir: Option<PathBuf>,
    /// Ask once more for strict JSON when a reply cannot be parsed.
    #[arg(long)]
    pub format_retry: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<VariantKind, String> {
    s.parse().map_err(|e: vanhiele_core::prompt::PromptError| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric {s:?}; expected f1_macro, f1_weighted, qwk, or mae"))
}

fn parse_store_weighting(s: &str) -> std::result::Result<StoreWeighting, String> {
    match s.replace('-', "_").as_str() {
        "combined" => Ok(StoreWeighting::Combined),
        "response_only" => Ok(StoreWeighting::ResponseOnly),
        "question_only" => Ok(StoreWeighting::QuestionOnly),
        _ => Err(format!("unknown store weighting {s:?}; expected combined, response-only, or question-only")),
    }
}

impl DataArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = &self.dictionary {
            c.dictionary = Some(v.clone());
        }
        c.lenient |= self.lenient;
    }
}

impl RunArgs {
    fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                *slot = value.clone();
            }
        }
        set(&mut c.variant, &self.variant);
        set_opt(&mut c.derangement_seed, &self.derangement_seed);
        set(&mut c.k, &self.k);
        set(&mut c.response_weight, &self.response_weight);
        set(&mut c.store_weighting, &self.store_weighting);
        c.exclude_validation_from_retrieval |= self.exclude_validation_from_retrieval;
        set(&mut c.seed, &self.seed);
        set(&mut c.n_folds, &self.folds);
        set_opt(&mut c.fold_plan, &self.fold_plan);
        set(&mut c.parallelism, &self.parallelism);
        set(&mut c.embedding.backend, &self.embedding_backend);
        set(&mut c.embedding.model, &self.embedding_model);
        set_opt(&mut c.embedding.endpoint, &self.embedding_endpoint);
        set_opt(&mut c.embedding_cache, &self.embedding_cache);
        set(&mut c.embedding.hash_dim, &self.hash_dim);
        set(&mut c.llm.backend, &self.llm_backend);
        set(&mut c.llm.model, &self.llm_model);
        set_opt(&mut c.llm.endpoint, &self.llm_endpoint);
        set_opt(&mut c.completion_cache, &self.completion_cache);
        set(&mut c.llm.temperature, &self.temperature);
        if !self.scripted_replies.is_empty() {
            c.llm.scripted_replies = self.scripted_replies.clone();
        }
        set_opt(&mut c.prompts_dir, &self.prompts_dir);
        set_opt(&mut c.templates_dir, &self.templates_dir);
        c.format_retry |= self.format_retry;
        set(&mut c.output_dir, &self.output);
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match dispatch(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn resolve(path: Option<&Path>, data: &DataArgs, run: Option<&RunArgs>) -> Result<RunConfig> {
    let mut config = base_config(path)?;
    data.apply(&mut config);
    if let Some(run) = run {
        run.apply(&mut config);
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<()> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Validate(data) => cmd_validate(&resolve(config_path, &data, None)?),
        Command::Embed { data, run, snapshot } => cmd_embed(&resolve(config_path, &data, Some(&run))?, snapshot.as_deref()),
        Command::Classify { data, run, pair } => cmd_classify(&resolve(config_path, &data, Some(&run))?, &pair),
        Command::Evaluate { data, run } => cmd_evaluate(&resolve(config_path, &data, Some(&run))?),
        Command::Compare { report_a, report_b, metrics, json } => cmd_compare(&report_a, &report_b, &metrics, json),
        Command::Export(export) => cmd_export(config_path, export),
    }
}

fn load_inputs(config: &RunConfig) -> Result<(SkillsDictionary, Corpus, LoadSummary)> {
    let dictionary = io::load_skills_dictionary(config.dictionary_path()?, config.dictionary_options())?;
    let (corpus, summary) = io::load_corpus(config.data_path()?, &dictionary, config.strictness())?;
    if !summary.skipped.is_empty() {
        eprintln!("warning: skipped {} invalid record(s)", summary.skipped.len());
        for issue in &summary.skipped {
            eprintln!("  {issue}");
        }
    }
    if !summary.warnings.is_empty() {
        eprintln!("warning: {} record warning(s)", summary.warnings.len());
        for issue in &summary.warnings {
            eprintln!("  {issue}");
        }
    }
    if corpus.is_empty() {
        return Err(Error::Data(format!("{}: no valid pairs", config.data_path()?.display())));
    }
    Ok((dictionary, corpus, summary))
}

fn cmd_validate(config: &RunConfig) -> Result<()> {
    let (dictionary, corpus, summary) = load_inputs(config)?;
    println!("{} pairs, {} skills over {} levels", corpus.len(), dictionary.len(), dictionary.levels().len());
    if !summary.skipped.is_empty() {
        println!("{} records skipped", summary.skipped.len());
    }
    println!("\nlevel distribution:");
    let dist = corpus.level_distribution();
    for level in Level::ALL {
        let n = dist.get(&level).copied().unwrap_or(0);
        let share = 100.0 * n as f64 / corpus.len() as f64;
        println!("  {} {:<18} {:>5}  {:>5.1}%", level.value(), level.name(), n, share);
    }
    println!("\nskill usage:");
    let usage = corpus.skill_usage();
    let widest = usage.iter().map(|(_, n)| *n).max().unwrap_or(0).max(1);
    for (id, n) in usage {
        let bar = "#".repeat((n * 40).div_ceil(widest));
        let name = dictionary.skill(&id).map(|s| s.name.as_str()).unwrap_or("");
        println!("  {:<6} {:>4}  {:<40}  {}", id.as_str(), n, bar, name);
    }
    Ok(())
}

fn cmd_embed(config: &RunConfig, snapshot_path: Option<&Path>) -> Result<()> {
    let (dictionary, corpus, _) = load_inputs(config)?;
    let embedder = config.embedder()?;
    let embeddings = embedder.embed_pairs(corpus.pairs(), config.response_weight)?;
    let definitions: Vec<&str> = dictionary.skills().iter().map(|s| s.definition.as_str()).collect();
    embedder.embed_texts(&definitions, TextRole::Skill)?;
    println!(
        "embedded {} pairs and {} skill definitions with {} ({} backend calls)",
        corpus.len(),
        definitions.len(),
        embedder.model_id(),
        embedder.backend_calls()
    );
    if let Some(path) = snapshot_path {
        let index = VectorIndex::build(&embeddings, config.store_weighting)?;
        snapshot::write(path, &index)?;
        println!("index snapshot: {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairInput {
    #[serde(default)]
    id: Option<String>,
    question: String,
    response: String,
}

fn cmd_classify(config: &RunConfig, pair_path: &Path) -> Result<()> {
    let input: PairInput = io::read_json(pair_path)?;
    if input.question.trim().is_empty() || input.response.trim().is_empty() {
        return Err(Error::malformed(pair_path, "question and response must be non-empty"));
    }
    let (dictionary, corpus, _) = load_inputs(config)?;
    let embedder = config.embedder()?;
    let pool: Vec<_> = corpus.pairs().iter().filter(|p| Some(&p.id) != input.id.as_ref()).cloned().collect();
    let embeddings = embedder.embed_pairs(&pool, config.response_weight)?;
    let index = VectorIndex::build(&embeddings, config.store_weighting)?;
    let gateway = config.gateway(corpus.pairs())?;
    let builder = PromptBuilder::new(&dictionary, config.prompt_variant()?, config.templates()?)?;
    let mut classifier = RagClassifier::new(&corpus, builder, &gateway, config.rag_settings());
    if let Some(dir) = &config.prompts_dir {
        classifier = classifier.with_audit_dir(dir);
    }
    let (question, response) = (input.question.trim(), input.response.trim());
    let q = embedder.embed_text(question, TextRole::Question)?;
    let r = embedder.embed_text(response, TextRole::Response)?;
    let query = classifier.query_vector(&q, &r)?;
    let audit_name = input.id.clone().unwrap_or_else(|| format!("pair-{}", &crate::embedding::EmbeddingCache::key("", TextRole::Response, response)[..12]));
    let prediction = classifier.classify(&index, &query, Target { question, response }, input.id.as_deref(), &audit_name)?;
    println!("{}", serde_json::to_string_pretty(&prediction).expect("predictions serialize"));
    Ok(())
}

fn fold_plan(config: &RunConfig, corpus: &Corpus) -> Result<FoldPlan> {
    if let Some(path) = &config.fold_plan {
        return io::load_fold_plan(path, corpus.pairs());
    }
    let (plan, warnings) = make_folds(corpus.pairs(), config.seed, config.n_folds)?;
    for FoldWarning::SparseLevel { level, count, n_folds } in warnings {
        eprintln!("warning: level {level} has {count} pair(s) for {n_folds} folds; some test folds will lack it");
    }
    Ok(plan)
}

fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let (dictionary, corpus, _) = load_inputs(config)?;
    let plan = fold_plan(config, &corpus)?;
    let outputs = RunOutputs::in_dir(&config.output_dir);
    let embedder = config.embedder()?;
    let embeddings: Vec<PairEmbedding> = embedder.embed_pairs(corpus.pairs(), config.response_weight)?;
    let gateway = config.gateway(corpus.pairs())?;
    let builder = PromptBuilder::new(&dictionary, config.prompt_variant()?, config.templates()?)?;
    let mut classifier = RagClassifier::new(&corpus, builder, &gateway, config.rag_settings());
    if let Some(dir) = &config.prompts_dir {
        classifier = classifier.with_audit_dir(dir);
    }
    let runner = RagRunner::new(classifier, embeddings, config.exclude_validation_from_retrieval, config.parallelism)?;
    let mut cv = run_cross_validation(&runner, &corpus, &plan);
    let report = outputs.write(&cv, &plan, &config.to_toml())?;
    if let Some(e) = cv.error.take() {
        eprintln!("partial results ({} of {} folds) written to {}", report.per_fold.len(), report.n_folds, outputs.report.display());
        return Err(e);
    }
    println!("{}", report.table_row());
    if report.parse_failures > 0 {
        println!("parse fallbacks: {} keyword, {} majority", report.parse_counts.fallback_regex, report.parse_counts.fallback_majority);
    }
    println!("report: {}", outputs.report.display());
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, metrics: &[Metric], json: bool) -> Result<()> {
    let (ra, rb) = (io::load_report(a)?, io::load_report(b)?);
    let metrics = if metrics.is_empty() { Metric::ALL.to_vec() } else { metrics.to_vec() };
    let results = compare_reports(&ra, &rb, &metrics)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&results).expect("comparisons serialize"));
    } else {
        println!("a = {} ({}), b = {} ({})", a.display(), ra.variant, b.display(), rb.variant);
        for c in &results {
            println!("{}", c.line());
        }
    }
    Ok(())
}

fn cmd_export(config_path: Option<&Path>, export: ExportCommand) -> Result<()> {
    match export {
        ExportCommand::FoldPlan { data, seed, folds, out } => {
            let mut config = resolve(config_path, &data, None)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(folds) = folds {
                config.n_folds = folds;
            }
            let (_, corpus, _) = load_inputs(&config)?;
            let plan = fold_plan(&config, &corpus)?;
            io::write_json(&out, &plan)?;
            println!("fold plan ({} folds, sizes {:?}): {}", plan.n_folds, plan.fold_sizes(), out.display());
        }
        ExportCommand::Pairs { data, out } => {
            let (_, corpus, _) = load_inputs(&resolve(config_path, &data, None)?)?;
            io::write_pairs(&out, corpus.pairs())?;
            println!("{} pairs: {}", corpus.len(), out.display());
        }
        ExportCommand::Synthetic { n, seed, out } => {
            let dictionary = crate::synthetic::dictionary();
            let corpus = crate::synthetic::corpus(&dictionary, crate::synthetic::typical_counts(n), seed);
            io::write_pairs(&out, corpus.pairs())?;
            println!("{} synthetic pairs: {}", corpus.len(), out.display());
        }
        ExportCommand::Dictionary { out } => {
            io::write_atomic(&out, crate::synthetic::BUNDLED_DICTIONARY.as_bytes())?;
            println!("dictionary: {}", out.display());
        }
        ExportCommand::Csv { report, out_dir } => {
            let r = io::load_report(&report)?;
            let outputs = RunOutputs::in_dir(&out_dir);
            io::write_atomic(&outputs.per_fold_csv, io::per_fold_csv(&r).as_bytes())?;
            io::write_atomic(&outputs.confusion_csv, io::confusion_csv(&r).as_bytes())?;
            println!("{}\n{}", outputs.per_fold_csv.display(), outputs.confusion_csv.display());
        }
    }
    Ok(())
}

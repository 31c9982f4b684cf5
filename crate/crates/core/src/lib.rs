//! Allocation-only core for skills-aware Van Hiele level classification.
//!
//! Everything here is pure: corpus and dictionary validation, unit-vector math and exact
//! retrieval, prompt assembly, output parsing, ordinal metrics, paired t-tests, fold
//! planning, and the report schema. IO, caches, and network backends live in the `vanhiele`
//! crate.

#![no_std]
extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod corpus;
pub mod derange;
pub mod folds;
pub mod index;
pub mod level;
pub mod metrics;
pub mod parse;
pub mod prompt;
pub mod report;
pub mod skills;
pub mod stats;
pub mod vector;

pub use corpus::{AnnotatedPair, Corpus, CorpusBuilder, PairRecord, Strictness};
pub use folds::{make_folds, FoldPlan};
pub use index::{RetrievalResult, VectorIndex};
pub use level::Level;
pub use metrics::{f1_scores, mae, qwk, ConfusionMatrix, FoldMetrics, Metric};
pub use parse::{parse_level, ParseStatus};
pub use prompt::{AssembledPrompt, PromptBuilder, PromptTemplates, PromptVariant, Target};
pub use report::{compare_reports, MetricsReport};
pub use skills::{SkillId, SkillsDictionary};
pub use stats::{paired_ttest, TTest};
pub use vector::{weighted_query, EmbeddingVector, PairEmbedding, StoreWeighting, TextRole};

//! On-disk formats: dictionary JSON, pairs JSONL, fold plan JSON, reports, CSV exports.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use vanhiele_core::corpus::{AnnotatedPair, Corpus, CorpusBuilder, LoadSummary, PairRecord, Strictness};
use vanhiele_core::folds::FoldPlan;
use vanhiele_core::level::Level;
use vanhiele_core::report::{MetricsReport, REPORT_SCHEMA_VERSION};
use vanhiele_core::skills::{DictionaryDocument, DictionaryOptions, SkillsDictionary};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))
}

/// Writes via a sibling temp file and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(path);
    let write = || -> std::io::Result<()> {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::malformed(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_skills_dictionary(path: &Path, options: DictionaryOptions) -> Result<SkillsDictionary> {
    let doc: DictionaryDocument = read_json(path)?;
    SkillsDictionary::from_document(doc, options).map_err(|source| Error::Dictionary { path: path.into(), source })
}

pub fn write_skills_dictionary(path: &Path, dictionary: &SkillsDictionary) -> Result<()> {
    write_json(path, &dictionary.to_document())
}

/// Loads the pairs file line by line. Strict mode fails on the first bad record; lenient mode
/// skips it and reports it in the summary.
pub fn load_corpus(path: &Path, dictionary: &SkillsDictionary, strictness: Strictness) -> Result<(Corpus, LoadSummary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = CorpusBuilder::new(dictionary, strictness);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        builder.push_line(i + 1, &line).map_err(|issue| Error::Record { path: path.into(), issue })?;
    }
    Ok(builder.finish())
}

pub fn pairs_to_jsonl(pairs: &[AnnotatedPair]) -> String {
    let mut out = String::new();
    for pair in pairs {
        let line = serde_json::to_string(&PairRecord::from(pair)).expect("pair records always serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_pairs(path: &Path, pairs: &[AnnotatedPair]) -> Result<()> {
    write_atomic(path, pairs_to_jsonl(pairs).as_bytes())
}

/// Reads a fold plan and checks that it partitions `pairs`.
pub fn load_fold_plan(path: &Path, pairs: &[AnnotatedPair]) -> Result<FoldPlan> {
    let plan: FoldPlan = read_json(path)?;
    plan.check_against(pairs)?;
    Ok(plan)
}

/// Fingerprint of a fold plan: SHA-256 of its compact JSON form.
pub fn fold_plan_sha256(plan: &FoldPlan) -> String {
    let bytes = serde_json::to_vec(plan).expect("fold plans always serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Reads a report and checks its schema version and internal consistency.
pub fn load_report(path: &Path) -> Result<MetricsReport> {
    let report: MetricsReport = read_json(path)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::malformed(path, format!("unsupported schema_version {}", report.schema_version)));
    }
    let drift = report.summary_drift();
    if drift > 1e-12 {
        return Err(Error::malformed(path, format!("summary disagrees with per_fold entries by {drift:e}")));
    }
    Ok(report)
}

/// `fold,n_test,f1_macro,f1_weighted,qwk,mae,parse_failures`, one row per fold.
pub fn per_fold_csv(report: &MetricsReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["fold", "n_test", "f1_macro", "f1_weighted", "qwk", "mae", "parse_failures"])
        .expect("in-memory write");
    for f in &report.per_fold {
        writer
            .write_record([
                f.fold.to_string(),
                f.n_test.to_string(),
                f.f1_macro.to_string(),
                f.f1_weighted.to_string(),
                f.qwk.to_string(),
                f.mae.to_string(),
                f.parse_failures.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Pooled confusion matrix: rows are true levels, columns predicted levels.
pub fn confusion_csv(report: &MetricsReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\pred".to_string()];
    header.extend(Level::ALL.iter().map(|l| l.value().to_string()));
    writer.write_record(&header).expect("in-memory write");
    for level in Level::ALL {
        let mut row = vec![level.value().to_string()];
        row.extend(report.confusion.counts[level.index()].iter().map(u64::to_string));
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

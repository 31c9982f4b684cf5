//! Annotated question–response pairs and their validation against a skills dictionary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::level::{Level, LEVEL_COUNT};
use crate::skills::{SkillId, SkillsDictionary};

/// One annotated question–response pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedPair {
    pub id: String,
    pub question_id: String,
    pub participant_id: String,
    pub question: String,
    pub response: String,
    pub level: Level,
    /// Demonstrated skills, in record order, without duplicates.
    pub skill_ids: Vec<SkillId>,
}

/// One line of the pairs file, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub question_id: String,
    pub participant_id: String,
    pub question: String,
    pub response: String,
    pub level: i64,
    pub skill_ids: Vec<String>,
}

impl From<&AnnotatedPair> for PairRecord {
    fn from(pair: &AnnotatedPair) -> Self {
        PairRecord {
            id: pair.id.clone(),
            question_id: pair.question_id.clone(),
            participant_id: pair.participant_id.clone(),
            question: pair.question.clone(),
            response: pair.response.clone(),
            level: i64::from(pair.level.value()),
            skill_ids: pair.skill_ids.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordProblem {
    #[error("malformed record: {0}")]
    Parse(String),
    #[error("field {0:?} is empty")]
    EmptyField(&'static str),
    #[error("level {0} is outside 1..=5")]
    Level(i64),
    #[error("malformed skill id {0:?}")]
    MalformedSkill(String),
    #[error("unknown skill id {0}")]
    UnknownSkill(String),
    #[error("skill {id} listed twice")]
    DuplicateSkill { id: SkillId },
    #[error("skill {id} does not belong to annotated level {level}")]
    SkillOutsideLevel { id: SkillId, level: Level },
    #[error("duplicate pair id {0:?}")]
    DuplicateId(String),
}

/// A problem tied to a 1-based line of the pairs file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub problem: RecordProblem,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Abort on the first invalid record.
    #[default]
    Strict,
    /// Skip invalid records; cross-level skills become warnings.
    Lenient,
}

/// Validates a record. Returns the pair plus non-fatal warnings (only in lenient mode).
pub fn validate_record(
    record: PairRecord,
    dictionary: &SkillsDictionary,
    strictness: Strictness,
) -> Result<(AnnotatedPair, Vec<RecordProblem>), RecordProblem> {
    let non_empty = |value: String, field: &'static str| {
        let trimmed = value.trim();
        if trimmed.is_empty() {
            Err(RecordProblem::EmptyField(field))
        } else {
            Ok(trimmed.to_string())
        }
    };
    let id = non_empty(record.id, "id")?;
    let question_id = non_empty(record.question_id, "question_id")?;
    let participant_id = non_empty(record.participant_id, "participant_id")?;
    let question = non_empty(record.question, "question")?;
    let response = non_empty(record.response, "response")?;
    let level = u8::try_from(record.level)
        .ok()
        .and_then(Level::new)
        .ok_or(RecordProblem::Level(record.level))?;

    let mut warnings = Vec::new();
    let mut skill_ids: Vec<SkillId> = Vec::with_capacity(record.skill_ids.len());
    for raw in record.skill_ids {
        let raw = raw.trim();
        let id: SkillId = raw.parse().map_err(|_| RecordProblem::MalformedSkill(raw.to_string()))?;
        if dictionary.skill(&id).is_none() {
            return Err(RecordProblem::UnknownSkill(raw.to_string()));
        }
        if skill_ids.contains(&id) {
            return Err(RecordProblem::DuplicateSkill { id });
        }
        if id.level() != level {
            let problem = RecordProblem::SkillOutsideLevel { id: id.clone(), level };
            match strictness {
                Strictness::Strict => return Err(problem),
                Strictness::Lenient => warnings.push(problem),
            }
        }
        skill_ids.push(id);
    }
    Ok((
        AnnotatedPair { id, question_id, participant_id, question, response, level, skill_ids },
        warnings,
    ))
}

/// Incremental line-by-line corpus loader. IO stays with the caller.
#[derive(Debug)]
pub struct CorpusBuilder<'d> {
    dictionary: &'d SkillsDictionary,
    strictness: Strictness,
    pairs: Vec<AnnotatedPair>,
    ids: BTreeSet<String>,
    skipped: Vec<LineIssue>,
    warnings: Vec<LineIssue>,
}

/// Outcome of a finished load.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadSummary {
    /// Records rejected in lenient mode.
    pub skipped: Vec<LineIssue>,
    pub warnings: Vec<LineIssue>,
}

impl<'d> CorpusBuilder<'d> {
    pub fn new(dictionary: &'d SkillsDictionary, strictness: Strictness) -> Self {
        Self {
            dictionary,
            strictness,
            pairs: Vec::new(),
            ids: BTreeSet::new(),
            skipped: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Feeds one line. Blank lines are ignored. In strict mode the first problem is returned
    /// as an error; in lenient mode it is recorded and the record skipped.
    pub fn push_line(&mut self, line: usize, text: &str) -> Result<(), LineIssue> {
        if text.trim().is_empty() {
            return Ok(());
        }
        let outcome = serde_json::from_str::<PairRecord>(text)
            .map_err(|e| RecordProblem::Parse(e.to_string()))
            .and_then(|record| validate_record(record, self.dictionary, self.strictness))
            .and_then(|(pair, warnings)| {
                if self.ids.contains(&pair.id) {
                    Err(RecordProblem::DuplicateId(pair.id))
                } else {
                    Ok((pair, warnings))
                }
            });
        match outcome {
            Ok((pair, warnings)) => {
                self.warnings.extend(warnings.into_iter().map(|problem| LineIssue { line, problem }));
                self.ids.insert(pair.id.clone());
                self.pairs.push(pair);
                Ok(())
            }
            Err(problem) => {
                let issue = LineIssue { line, problem };
                match self.strictness {
                    Strictness::Strict => Err(issue),
                    Strictness::Lenient => {
                        self.skipped.push(issue);
                        Ok(())
                    }
                }
            }
        }
    }

    pub fn finish(self) -> (Corpus, LoadSummary) {
        (
            Corpus { pairs: self.pairs, dictionary: self.dictionary.clone() },
            LoadSummary { skipped: self.skipped, warnings: self.warnings },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate pair id {0:?}")]
    DuplicateId(String),
    #[error("pair {id}: {problem}")]
    Invalid { id: String, problem: RecordProblem },
}

/// Validated pairs plus the dictionary they were checked against. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pairs: Vec<AnnotatedPair>,
    dictionary: SkillsDictionary,
}

impl Corpus {
    /// Builds a corpus from already-constructed pairs, re-checking every invariant strictly.
    pub fn new(pairs: Vec<AnnotatedPair>, dictionary: SkillsDictionary) -> Result<Self, CorpusError> {
        let mut ids = BTreeSet::new();
        for pair in &pairs {
            if !ids.insert(pair.id.as_str()) {
                return Err(CorpusError::DuplicateId(pair.id.clone()));
            }
            validate_record(PairRecord::from(pair), &dictionary, Strictness::Strict)
                .map_err(|problem| CorpusError::Invalid { id: pair.id.clone(), problem })?;
        }
        Ok(Self { pairs, dictionary })
    }

    pub fn pairs(&self) -> &[AnnotatedPair] {
        &self.pairs
    }

    pub fn dictionary(&self) -> &SkillsDictionary {
        &self.dictionary
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedPair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    /// Count per level, omitting levels with no pairs.
    pub fn level_distribution(&self) -> BTreeMap<Level, usize> {
        let counts = self.level_counts();
        Level::ALL
            .iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .map(|(l, n)| (*l, n))
            .collect()
    }

    pub fn level_counts(&self) -> [usize; LEVEL_COUNT] {
        let mut counts = [0; LEVEL_COUNT];
        for pair in &self.pairs {
            counts[pair.level.index()] += 1;
        }
        counts
    }

    /// How often each skill is annotated, in dictionary order.
    pub fn skill_usage(&self) -> Vec<(SkillId, usize)> {
        let mut usage: Vec<(SkillId, usize)> =
            self.dictionary.skills().iter().map(|s| (s.id.clone(), 0)).collect();
        for pair in &self.pairs {
            for id in &pair.skill_ids {
                if let Some(i) = self.dictionary.position(id) {
                    usage[i].1 += 1;
                }
            }
        }
        usage
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::tests::dictionary;
    use alloc::format;
    use alloc::vec;

    fn line(id: &str, level: i64, skills: &[&str], response: &str) -> String {
        serde_json::to_string(&PairRecord {
            id: id.into(),
            question_id: "q1".into(),
            participant_id: "p1".into(),
            question: "Is every square a rhombus?".into(),
            response: response.into(),
            level,
            skill_ids: skills.iter().map(|s| s.to_string()).collect(),
        })
        .unwrap()
    }

    #[test]
    fn strict_load_and_distribution() {
        let dict = dictionary([2, 2, 2, 2, 2]);
        let mut builder = CorpusBuilder::new(&dict, Strictness::Strict);
        builder.push_line(1, &line("a", 3, &["L3.1"], "Yes, a square is a rhombus")).unwrap();
        builder.push_line(2, "   ").unwrap();
        builder.push_line(3, &line("b", 3, &[], "  yes  ")).unwrap();
        builder.push_line(4, &line("c", 2, &["L2.1", "L2.2"], "no, maybe a square")).unwrap();
        let (corpus, summary) = builder.finish();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.get("b").unwrap().response, "yes");
        assert!(summary.skipped.is_empty());
        let dist = corpus.level_distribution();
        assert_eq!(dist.into_iter().collect::<Vec<_>>(), vec![(Level::Analysis, 1), (Level::InformalDeduction, 2)]);
    }

    #[test]
    fn single_pair_distribution() {
        let dict = dictionary([1, 1, 1, 1, 1]);
        let mut builder = CorpusBuilder::new(&dict, Strictness::Strict);
        builder.push_line(1, &line("a", 3, &[], "r")).unwrap();
        let (corpus, _) = builder.finish();
        assert_eq!(corpus.level_distribution(), BTreeMap::from([(Level::InformalDeduction, 1)]));
    }

    #[test]
    fn rejects_empty_response_unknown_skill_and_duplicates() {
        let dict = dictionary([1, 1, 1, 1, 1]);
        let cases = [
            (line("a", 2, &[], "   "), RecordProblem::EmptyField("response")),
            (line("a", 9, &[], "r"), RecordProblem::Level(9)),
            (line("a", 2, &["L9.1"], "r"), RecordProblem::MalformedSkill("L9.1".into())),
            (line("a", 2, &["L2.7"], "r"), RecordProblem::UnknownSkill("L2.7".into())),
        ];
        for (text, expected) in cases {
            let mut builder = CorpusBuilder::new(&dict, Strictness::Strict);
            let issue = builder.push_line(7, &text).unwrap_err();
            assert_eq!(issue, LineIssue { line: 7, problem: expected });
        }
        let mut builder = CorpusBuilder::new(&dict, Strictness::Strict);
        builder.push_line(1, &line("a", 2, &[], "r")).unwrap();
        let issue = builder.push_line(2, &line("a", 3, &[], "s")).unwrap_err();
        assert_eq!(issue.problem, RecordProblem::DuplicateId("a".into()));
        let issue = builder.push_line(3, "{not json").unwrap_err();
        assert!(matches!(issue.problem, RecordProblem::Parse(_)));
        assert!(format!("{issue}").starts_with("line 3: "));
    }

    #[test]
    fn cross_level_skill_strict_vs_lenient() {
        let dict = dictionary([1, 1, 1, 1, 1]);
        let text = line("a", 2, &["L3.1"], "r");
        let mut strict = CorpusBuilder::new(&dict, Strictness::Strict);
        assert!(matches!(
            strict.push_line(1, &text).unwrap_err().problem,
            RecordProblem::SkillOutsideLevel { level: Level::Analysis, .. }
        ));
        let mut lenient = CorpusBuilder::new(&dict, Strictness::Lenient);
        lenient.push_line(1, &text).unwrap();
        lenient.push_line(2, &line("b", 2, &[], "")).unwrap();
        let (corpus, summary) = lenient.finish();
        assert_eq!(corpus.len(), 1);
        assert_eq!(summary.warnings.len(), 1);
        assert_eq!(summary.skipped, vec![LineIssue { line: 2, problem: RecordProblem::EmptyField("response") }]);
    }

    #[test]
    fn validation_is_deterministic() {
        let dict = dictionary([1, 1, 1, 1, 1]);
        let lines = [line("a", 2, &["L3.1"], "r"), line("b", 0, &[], "r"), line("a", 1, &[], "r")];
        let run = || {
            let mut b = CorpusBuilder::new(&dict, Strictness::Lenient);
            for (i, l) in lines.iter().enumerate() {
                b.push_line(i + 1, l).unwrap();
            }
            b.finish().1
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn corpus_new_revalidates() {
        let dict = dictionary([1, 1, 1, 1, 1]);
        let pair = AnnotatedPair {
            id: "x".into(),
            question_id: "q".into(),
            participant_id: "p".into(),
            question: "q".into(),
            response: "r".into(),
            level: Level::Rigor,
            skill_ids: vec!["L5.1".parse().unwrap()],
        };
        assert!(Corpus::new(vec![pair.clone()], dict.clone()).is_ok());
        assert_eq!(
            Corpus::new(vec![pair.clone(), pair.clone()], dict.clone()),
            Err(CorpusError::DuplicateId("x".into()))
        );
        let mut wrong = pair;
        wrong.skill_ids = vec!["L4.1".parse().unwrap()];
        assert!(matches!(Corpus::new(vec![wrong], dict), Err(CorpusError::Invalid { .. })));
    }

    #[test]
    fn skill_usage_counts() {
        let dict = dictionary([1, 2, 1, 1, 1]);
        let mut b = CorpusBuilder::new(&dict, Strictness::Strict);
        b.push_line(1, &line("a", 2, &["L2.1", "L2.2"], "r")).unwrap();
        b.push_line(2, &line("b", 2, &["L2.2"], "r")).unwrap();
        let (corpus, _) = b.finish();
        let usage: Vec<usize> = corpus.skill_usage().into_iter().map(|(_, n)| n).collect();
        assert_eq!(usage, vec![0, 1, 2, 0, 0, 0]);
    }
}

//! The skills dictionary: each Van Hiele level decomposed into observable reasoning skills.
//!
//! Skill order is document order. That order is load-bearing: skill positions define the
//! 33-dimensional skill vectors used by the fine-tuning side, so it must never be re-sorted.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::level::{Level, LEVEL_COUNT};

/// Skill count of the published dictionary.
pub const PUBLISHED_SKILL_COUNT: usize = 33;

/// A skill identifier of the form `L<level>.<index>`, e.g. `L3.2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SkillId {
    raw: String,
    level: Level,
}

impl SkillId {
    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// The level embedded in the identifier.
    pub fn level(&self) -> Level {
        self.level
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed skill id {0:?}: expected L<level 1-5>.<index>")]
pub struct MalformedSkillId(pub String);

impl FromStr for SkillId {
    type Err = MalformedSkillId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MalformedSkillId(s.to_string());
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (level, index) = rest.split_once('.').ok_or_else(bad)?;
        let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(level) || !all_digits(index) {
            return Err(bad());
        }
        let level = level.parse::<u8>().ok().and_then(Level::new).ok_or_else(bad)?;
        match index.parse::<u32>() {
            Ok(n) if n >= 1 => Ok(SkillId { raw: s.to_string(), level }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for SkillId {
    type Error = MalformedSkillId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SkillId> for String {
    fn from(id: SkillId) -> String {
        id.raw
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skill {
    pub id: SkillId,
    pub name: String,
    pub definition: String,
}

impl Skill {
    pub fn level(&self) -> Level {
        self.id.level()
    }
}

/// One level as described by the dictionary document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelEntry {
    pub level: Level,
    pub name: String,
    pub definition: String,
}

// On-disk document shape.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryDocument {
    pub levels: Vec<LevelDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDocument {
    pub value: i64,
    pub name: String,
    pub definition: String,
    pub skills: Vec<SkillDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillDocument {
    pub id: String,
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DictionaryError {
    #[error("expected {LEVEL_COUNT} levels, found {0}")]
    LevelCount(usize),
    #[error("level entry {position} has value {value}; levels must be listed 1..=5 in order")]
    LevelOrder { position: usize, value: i64 },
    #[error("level {level} is named {found:?}, expected {expected:?}")]
    LevelName { level: Level, expected: &'static str, found: String },
    #[error("level {0} has an empty definition")]
    EmptyLevelDefinition(Level),
    #[error("level {0} has no skills")]
    EmptyLevel(Level),
    #[error(transparent)]
    MalformedSkillId(#[from] MalformedSkillId),
    #[error("skill {id} is declared under level {declared}")]
    SkillLevelMismatch { id: SkillId, declared: Level },
    #[error("duplicate skill id {0}")]
    DuplicateSkill(SkillId),
    #[error("skill {0} has an empty definition")]
    EmptySkillDefinition(SkillId),
    #[error("expected {expected} skills in total, found {found}")]
    SkillCount { expected: usize, found: usize },
}

/// Validation switches for [`SkillsDictionary::from_document`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictionaryOptions {
    /// Required total skill count, if any.
    pub expected_skill_count: Option<usize>,
    /// Require the canonical English level names.
    pub canonical_level_names: bool,
}

impl DictionaryOptions {
    pub const STRICT: Self = Self {
        expected_skill_count: Some(PUBLISHED_SKILL_COUNT),
        canonical_level_names: true,
    };
    pub const LENIENT: Self = Self {
        expected_skill_count: None,
        canonical_level_names: false,
    };
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        Self::STRICT
    }
}

/// A validated, immutable skills dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillsDictionary {
    levels: Vec<LevelEntry>,
    skills: Vec<Skill>,
    positions: BTreeMap<SkillId, usize>,
}

impl SkillsDictionary {
    /// Validates a parsed document. The error names the first violated invariant.
    pub fn from_document(doc: DictionaryDocument, options: DictionaryOptions) -> Result<Self, DictionaryError> {
        if doc.levels.len() != LEVEL_COUNT {
            return Err(DictionaryError::LevelCount(doc.levels.len()));
        }
        let mut levels = Vec::with_capacity(LEVEL_COUNT);
        let mut skills = Vec::new();
        let mut positions = BTreeMap::new();
        for (position, entry) in doc.levels.into_iter().enumerate() {
            let level = Level::from_index(position)
                .filter(|l| i64::from(l.value()) == entry.value)
                .ok_or(DictionaryError::LevelOrder { position, value: entry.value })?;
            let name = entry.name.trim();
            if options.canonical_level_names && !name.eq_ignore_ascii_case(level.name()) {
                return Err(DictionaryError::LevelName {
                    level,
                    expected: level.name(),
                    found: name.to_string(),
                });
            }
            let definition = entry.definition.trim();
            if definition.is_empty() {
                return Err(DictionaryError::EmptyLevelDefinition(level));
            }
            if entry.skills.is_empty() {
                return Err(DictionaryError::EmptyLevel(level));
            }
            for skill in entry.skills {
                let id: SkillId = skill.id.trim().parse()?;
                if id.level() != level {
                    return Err(DictionaryError::SkillLevelMismatch { id, declared: level });
                }
                if positions.contains_key(&id) {
                    return Err(DictionaryError::DuplicateSkill(id));
                }
                let definition = skill.definition.trim();
                if definition.is_empty() {
                    return Err(DictionaryError::EmptySkillDefinition(id));
                }
                positions.insert(id.clone(), skills.len());
                skills.push(Skill {
                    id,
                    name: skill.name.trim().to_string(),
                    definition: definition.to_string(),
                });
            }
            levels.push(LevelEntry {
                level,
                name: name.to_string(),
                definition: definition.to_string(),
            });
        }
        if let Some(expected) = options.expected_skill_count {
            if skills.len() != expected {
                return Err(DictionaryError::SkillCount { expected, found: skills.len() });
            }
        }
        Ok(Self { levels, skills, positions })
    }

    pub fn to_document(&self) -> DictionaryDocument {
        DictionaryDocument {
            levels: self
                .levels
                .iter()
                .map(|entry| LevelDocument {
                    value: i64::from(entry.level.value()),
                    name: entry.name.clone(),
                    definition: entry.definition.clone(),
                    skills: self
                        .skills_of(entry.level)
                        .map(|s| SkillDocument {
                            id: s.id.to_string(),
                            name: s.name.clone(),
                            definition: s.definition.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn levels(&self) -> &[LevelEntry] {
        &self.levels
    }

    pub fn level(&self, level: Level) -> &LevelEntry {
        &self.levels[level.index()]
    }

    /// All skills in document order.
    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn skill(&self, id: &SkillId) -> Option<&Skill> {
        self.position(id).map(|i| &self.skills[i])
    }

    pub fn find(&self, id: &str) -> Option<&Skill> {
        id.parse::<SkillId>().ok().and_then(|id| self.skill(&id))
    }

    /// Document-order position of a skill.
    pub fn position(&self, id: &SkillId) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn skills_of(&self, level: Level) -> impl Iterator<Item = &Skill> {
        self.skills.iter().filter(move |s| s.level() == level)
    }

    /// Multi-hot vector over document order for a set of skill ids. Unknown ids are ignored.
    pub fn skill_vector<'a>(&self, ids: impl IntoIterator<Item = &'a SkillId>) -> Vec<bool> {
        let mut out = alloc::vec![false; self.skills.len()];
        for id in ids {
            if let Some(i) = self.position(id) {
                out[i] = true;
            }
        }
        out
    }

    /// Copy with skill definitions reassigned: skill `i` receives the definition of skill
    /// `source[i]`. Ids, names, and level text are untouched.
    pub(crate) fn with_definitions_from(&self, source: &[usize]) -> Self {
        debug_assert_eq!(source.len(), self.skills.len());
        let mut out = self.clone();
        for (skill, &from) in out.skills.iter_mut().zip(source) {
            skill.definition = self.skills[from].definition.clone();
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    /// A small document with `per_level[i]` skills under level `i + 1`.
    pub(crate) fn document(per_level: [usize; 5]) -> DictionaryDocument {
        DictionaryDocument {
            levels: Level::ALL
                .iter()
                .zip(per_level)
                .map(|(level, n)| LevelDocument {
                    value: i64::from(level.value()),
                    name: level.name().to_string(),
                    definition: format!("Definition of level {}", level.value()),
                    skills: (1..=n)
                        .map(|i| SkillDocument {
                            id: format!("L{}.{}", level.value(), i),
                            name: format!("skill {}.{}", level.value(), i),
                            definition: format!("Demonstrates behaviour {} of level {}", i, level.value()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub(crate) fn dictionary(per_level: [usize; 5]) -> SkillsDictionary {
        SkillsDictionary::from_document(document(per_level), DictionaryOptions::LENIENT).unwrap()
    }

    #[test]
    fn skill_id_parsing() {
        let id: SkillId = "L3.2".parse().unwrap();
        assert_eq!(id.level(), Level::InformalDeduction);
        assert_eq!(id.as_str(), "L3.2");
        for bad in ["L9.1", "L0.1", "3.2", "L3", "L3.", "L3.0", "L.1", "l3.2", "L3.2a", "L+3.2"] {
            assert!(bad.parse::<SkillId>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn valid_published_shape() {
        let dict = SkillsDictionary::from_document(document([6, 8, 8, 6, 5]), DictionaryOptions::STRICT).unwrap();
        assert_eq!(dict.len(), 33);
        assert_eq!(dict.levels().len(), 5);
        assert_eq!(dict.skills()[0].id.as_str(), "L1.1");
        assert_eq!(dict.skills()[32].id.as_str(), "L5.5");
        assert_eq!(dict.position(&"L2.1".parse().unwrap()), Some(6));
        assert_eq!(dict.skills_of(Level::Analysis).count(), 8);
        assert_eq!(SkillsDictionary::from_document(dict.to_document(), DictionaryOptions::STRICT).unwrap(), dict);
    }

    #[test]
    fn empty_level_rejected() {
        let err = SkillsDictionary::from_document(document([2, 0, 1, 1, 1]), DictionaryOptions::LENIENT).unwrap_err();
        assert_eq!(err, DictionaryError::EmptyLevel(Level::Analysis));
    }

    #[test]
    fn id_level_mismatch_rejected() {
        let mut doc = document([1, 1, 1, 1, 1]);
        doc.levels[2].skills[0].id = "L2.1".into();
        let err = SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT).unwrap_err();
        assert!(matches!(err, DictionaryError::SkillLevelMismatch { declared: Level::InformalDeduction, .. }));
    }

    #[test]
    fn duplicate_and_count_errors() {
        let mut doc = document([2, 1, 1, 1, 1]);
        doc.levels[0].skills[1].id = "L1.1".into();
        assert!(matches!(
            SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT),
            Err(DictionaryError::DuplicateSkill(_))
        ));
        let err = SkillsDictionary::from_document(document([1, 1, 1, 1, 1]), DictionaryOptions::STRICT).unwrap_err();
        assert_eq!(err, DictionaryError::SkillCount { expected: 33, found: 5 });
    }

    #[test]
    fn level_structure_errors() {
        let mut doc = document([1, 1, 1, 1, 1]);
        doc.levels.swap(0, 1);
        assert!(matches!(
            SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT),
            Err(DictionaryError::LevelOrder { position: 0, value: 2 })
        ));
        let mut doc = document([1, 1, 1, 1, 1]);
        doc.levels.pop();
        assert_eq!(
            SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT),
            Err(DictionaryError::LevelCount(4))
        );
        let mut doc = document([1, 1, 1, 1, 1]);
        doc.levels[4].name = "Rigour!".into();
        assert!(matches!(
            SkillsDictionary::from_document(doc.clone(), DictionaryOptions { canonical_level_names: true, expected_skill_count: None }),
            Err(DictionaryError::LevelName { .. })
        ));
        assert!(SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT).is_ok());
        let mut doc = document([1, 1, 1, 1, 1]);
        doc.levels[1].skills[0].definition = "   ".into();
        assert!(matches!(
            SkillsDictionary::from_document(doc, DictionaryOptions::LENIENT),
            Err(DictionaryError::EmptySkillDefinition(_))
        ));
    }

    #[test]
    fn skill_vector_is_multi_hot_in_document_order() {
        let dict = dictionary([2, 2, 1, 1, 1]);
        let ids: Vec<SkillId> = vec!["L2.2".parse().unwrap(), "L1.1".parse().unwrap()];
        assert_eq!(dict.skill_vector(&ids), vec![true, false, false, true, false, false, false]);
    }
}

//! Prompt assembly for the baseline, skills-aware, and noisy-skills retrieval variants.
//!
//! Templates are plain text with `{{name}}` placeholders. Rendering tracks which byte ranges
//! of the output came from skills content, so the baseline and skills-aware prompts for the
//! same inputs can be shown to differ only inside those ranges.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedPair;
use crate::derange::{derange_definitions, TooFewElements};
use crate::skills::{Skill, SkillsDictionary};

pub const DEFAULT_SYSTEM_TEMPLATE: &str = include_str!("../templates/system.txt");
pub const DEFAULT_USER_TEMPLATE: &str = include_str!("../templates/user.txt");
pub const DEFAULT_OUTPUT_FORMAT: &str = include_str!("../templates/output_format.txt");

const PLACEHOLDERS: [&str; 5] = ["level_definitions", "skills_dictionary", "examples", "question", "response"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptVariant {
    Baseline,
    SkillsAware,
    /// Skills-aware with every skill definition moved to a different skill.
    NoisySkills { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Baseline,
    SkillsAware,
    NoisySkills,
}

impl FromStr for VariantKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "baseline" => Ok(VariantKind::Baseline),
            "skills_aware" => Ok(VariantKind::SkillsAware),
            "noisy_skills" => Ok(VariantKind::NoisySkills),
            _ => Err(PromptError::UnknownVariant(s.to_string())),
        }
    }
}

impl PromptVariant {
    /// Pairs a kind with its derangement seed; the seed must be present exactly for noisy skills.
    pub fn from_parts(kind: VariantKind, derangement_seed: Option<u64>) -> Result<Self, PromptError> {
        match (kind, derangement_seed) {
            (VariantKind::Baseline, None) => Ok(PromptVariant::Baseline),
            (VariantKind::SkillsAware, None) => Ok(PromptVariant::SkillsAware),
            (VariantKind::NoisySkills, Some(seed)) => Ok(PromptVariant::NoisySkills { seed }),
            (VariantKind::NoisySkills, None) => Err(PromptError::MissingSeed),
            (_, Some(_)) => Err(PromptError::UnexpectedSeed),
        }
    }

    pub fn kind(self) -> VariantKind {
        match self {
            PromptVariant::Baseline => VariantKind::Baseline,
            PromptVariant::SkillsAware => VariantKind::SkillsAware,
            PromptVariant::NoisySkills { .. } => VariantKind::NoisySkills,
        }
    }

    pub fn derangement_seed(self) -> Option<u64> {
        match self {
            PromptVariant::NoisySkills { seed } => Some(seed),
            _ => None,
        }
    }

    pub fn uses_skills(self) -> bool {
        !matches!(self, PromptVariant::Baseline)
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Baseline => "baseline",
            PromptVariant::SkillsAware => "skills_aware",
            PromptVariant::NoisySkills { .. } => "noisy_skills",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptVariant::NoisySkills { seed } => write!(f, "noisy_skills(seed={seed})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VariantRepr {
    kind: VariantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derangement_seed: Option<u64>,
}

impl Serialize for PromptVariant {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VariantRepr { kind: self.kind(), derangement_seed: self.derangement_seed() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PromptVariant {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = VariantRepr::deserialize(deserializer)?;
        PromptVariant::from_parts(repr.kind, repr.derangement_seed).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown variant {0:?}; expected baseline, skills-aware, or noisy-skills")]
    UnknownVariant(String),
    #[error("the noisy-skills variant requires a derangement seed")]
    MissingSeed,
    #[error("a derangement seed is only valid with the noisy-skills variant")]
    UnexpectedSeed,
    #[error(transparent)]
    Derangement(#[from] TooFewElements),
    #[error("unknown placeholder {{{{{0}}}}} in {1} template")]
    UnknownPlaceholder(String, &'static str),
    #[error("{1} template is missing the {{{{{0}}}}} placeholder")]
    MissingPlaceholder(&'static str, &'static str),
}

/// The three externally editable prompt texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    system: String,
    user: String,
    output_format: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::new(DEFAULT_SYSTEM_TEMPLATE, DEFAULT_USER_TEMPLATE, DEFAULT_OUTPUT_FORMAT)
            .expect("bundled templates are valid")
    }
}

impl PromptTemplates {
    /// Validates placeholders: the system template needs level definitions and the skills
    /// dictionary; the user template needs examples, question, and response.
    pub fn new(system: &str, user: &str, output_format: &str) -> Result<Self, PromptError> {
        for (text, which) in [(system, "system"), (user, "user"), (output_format, "output format")] {
            for piece in split_template(text) {
                if let Piece::Placeholder(name) = piece {
                    if !PLACEHOLDERS.contains(&name) {
                        return Err(PromptError::UnknownPlaceholder(name.to_string(), which));
                    }
                }
            }
        }
        let has = |text: &str, name: &str| {
            split_template(text).iter().any(|p| matches!(p, Piece::Placeholder(n) if *n == name))
        };
        for name in ["level_definitions", "skills_dictionary"] {
            if !has(system, name) {
                return Err(PromptError::MissingPlaceholder(name, "system"));
            }
        }
        for name in ["examples", "question", "response"] {
            if !has(user, name) {
                return Err(PromptError::MissingPlaceholder(name, "user"));
            }
        }
        Ok(Self {
            system: system.to_string(),
            user: user.to_string(),
            output_format: output_format.trim().to_string(),
        })
    }
}

#[derive(Debug, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn split_template(template: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = &after[..close];
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            pieces.push(Piece::Text(&rest[..open + 2]));
            rest = after;
            continue;
        }
        if open > 0 {
            pieces.push(Piece::Text(&rest[..open]));
        }
        pieces.push(Piece::Placeholder(name));
        rest = &after[close + 2..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    pieces
}

/// Text under construction with skills-content byte ranges tracked.
#[derive(Debug, Default, Clone)]
struct Tracked {
    text: String,
    skill_spans: Vec<Range<usize>>,
}

impl Tracked {
    fn push(&mut self, s: &str) {
        self.text.push_str(s);
    }

    fn push_skills(&mut self, s: &str) {
        if s.is_empty() {
            return;
        }
        let start = self.text.len();
        self.text.push_str(s);
        match self.skill_spans.last_mut() {
            Some(last) if last.end == start => last.end = self.text.len(),
            _ => self.skill_spans.push(start..self.text.len()),
        }
    }

    fn append(&mut self, other: Tracked) {
        let offset = self.text.len();
        self.text.push_str(&other.text);
        for span in other.skill_spans {
            let span = span.start + offset..span.end + offset;
            match self.skill_spans.last_mut() {
                Some(last) if last.end == span.start => last.end = span.end,
                _ => self.skill_spans.push(span),
            }
        }
    }
}

/// The question–response pair being classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target<'a> {
    pub question: &'a str,
    pub response: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub system_text: String,
    pub user_text: String,
    /// Retrieved example ids in retrieval-rank order.
    pub retrieved_ids: Vec<String>,
    pub variant: PromptVariant,
    /// Byte ranges of `system_text` holding skills content.
    pub system_skill_spans: Vec<Range<usize>>,
    /// Byte ranges of `user_text` holding skills content.
    pub user_skill_spans: Vec<Range<usize>>,
}

impl AssembledPrompt {
    /// System and user text with every skills range cut out.
    pub fn without_skills(&self) -> (String, String) {
        (cut(&self.system_text, &self.system_skill_spans), cut(&self.user_text, &self.user_skill_spans))
    }
}

fn cut(text: &str, spans: &[Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for span in spans {
        out.push_str(&text[at..span.start]);
        at = span.end;
    }
    out.push_str(&text[at..]);
    out
}

/// Assembles prompts for one variant. The (possibly deranged) dictionary and the system
/// prompt are fixed at construction; only the user prompt varies per instance.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: PromptTemplates,
    dictionary: SkillsDictionary,
    variant: PromptVariant,
    system: Tracked,
}

impl PromptBuilder {
    pub fn new(dictionary: &SkillsDictionary, variant: PromptVariant, templates: PromptTemplates) -> Result<Self, PromptError> {
        let dictionary = match variant {
            PromptVariant::NoisySkills { seed } => derange_definitions(dictionary, seed)?,
            _ => dictionary.clone(),
        };
        let mut builder = Self { templates, dictionary, variant, system: Tracked::default() };
        builder.system = builder.render(&builder.templates.system, None, &[]);
        Ok(builder)
    }

    /// The dictionary whose definitions appear in prompts (deranged for noisy skills).
    pub fn dictionary(&self) -> &SkillsDictionary {
        &self.dictionary
    }

    pub fn variant(&self) -> PromptVariant {
        self.variant
    }

    pub fn assemble(&self, target: Target<'_>, retrieved: &[(&AnnotatedPair, f64)]) -> AssembledPrompt {
        let mut user = self.render(&self.templates.user, Some(target), retrieved);
        let trimmed_len = user.text.trim_end().len();
        user.text.truncate(trimmed_len);
        if let Some(last) = user.skill_spans.last_mut() {
            last.end = last.end.min(trimmed_len);
        }
        user.skill_spans.retain(|s| s.start < s.end);
        user.push("\n\n");
        user.push(&self.templates.output_format);
        AssembledPrompt {
            system_text: self.system.text.clone(),
            user_text: user.text,
            retrieved_ids: retrieved.iter().map(|(p, _)| p.id.clone()).collect(),
            variant: self.variant,
            system_skill_spans: self.system.skill_spans.clone(),
            user_skill_spans: user.skill_spans,
        }
    }

    fn render(&self, template: &str, target: Option<Target<'_>>, retrieved: &[(&AnnotatedPair, f64)]) -> Tracked {
        let mut out = Tracked::default();
        for piece in split_template(template) {
            match piece {
                Piece::Text(t) => out.push(t),
                Piece::Placeholder("level_definitions") => out.push(&self.level_definitions()),
                Piece::Placeholder("skills_dictionary") => {
                    if self.variant.uses_skills() {
                        out.push_skills(&self.skills_dictionary());
                    }
                }
                Piece::Placeholder("examples") => out.append(self.examples(retrieved)),
                Piece::Placeholder("question") => out.push(target.map_or("", |t| t.question.trim())),
                Piece::Placeholder("response") => out.push(target.map_or("", |t| t.response.trim())),
                Piece::Placeholder(_) => {}
            }
        }
        out
    }

    fn level_definitions(&self) -> String {
        let lines: Vec<String> = self
            .dictionary
            .levels()
            .iter()
            .map(|l| format!("Level {} ({}): {}", l.level.value(), l.name, l.definition))
            .collect();
        lines.join("\n")
    }

    fn skills_dictionary(&self) -> String {
        let mut out = String::from("\nSkills dictionary (the reasoning skills that characterize each level):\n");
        for entry in self.dictionary.levels() {
            out.push_str(&format!("Level {} ({}):\n", entry.level.value(), entry.name));
            for skill in self.dictionary.skills_of(entry.level) {
                out.push_str(&skill_line(skill));
            }
        }
        out
    }

    fn examples(&self, retrieved: &[(&AnnotatedPair, f64)]) -> Tracked {
        let mut out = Tracked::default();
        if retrieved.is_empty() {
            out.push("(no examples retrieved)\n");
            return out;
        }
        for (rank, (pair, _score)) in retrieved.iter().enumerate() {
            let level = self.dictionary.level(pair.level);
            out.push(&format!(
                "Example {}\nQuestion: {}\nResponse: {}\nVan Hiele level: {} ({})\n",
                rank + 1,
                pair.question,
                pair.response,
                level.level.value(),
                level.name
            ));
            if self.variant.uses_skills() {
                let mut block = String::from("Demonstrated skills:");
                let skills: Vec<&Skill> = pair.skill_ids.iter().filter_map(|id| self.dictionary.skill(id)).collect();
                if skills.is_empty() {
                    block.push_str(" none annotated\n");
                } else {
                    block.push('\n');
                    for skill in skills {
                        block.push_str(&skill_line(skill));
                    }
                }
                out.push_skills(&block);
            }
            out.push("\n");
        }
        out
    }
}

fn skill_line(skill: &Skill) -> String {
    format!("- {} {}: {}\n", skill.id, skill.name, skill.definition)
}

/// One-shot form of [`PromptBuilder`].
pub fn assemble_prompt(
    target: Target<'_>,
    retrieved: &[(&AnnotatedPair, f64)],
    dictionary: &SkillsDictionary,
    variant: PromptVariant,
    templates: &PromptTemplates,
) -> Result<AssembledPrompt, PromptError> {
    Ok(PromptBuilder::new(dictionary, variant, templates.clone())?.assemble(target, retrieved))
}

//! Turning raw model output into a level. Parsing is total: every input yields a level.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::level::{Level, LEVEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    FallbackRegex,
    FallbackMajority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub level: Level,
    pub rationale: Option<String>,
    pub status: ParseStatus,
}

/// Parses `raw`, falling back to a keyword scan and then to the majority level of the
/// retrieved examples (ties and an empty list resolve to the lowest level).
pub fn parse_level(raw: &str, retrieved_levels: &[Level]) -> ParsedOutput {
    if let Some((level, rationale)) = parse_json(raw) {
        return ParsedOutput { level, rationale, status: ParseStatus::Parsed };
    }
    if let Some(level) = scan_level_keyword(raw) {
        return ParsedOutput { level, rationale: None, status: ParseStatus::FallbackRegex };
    }
    ParsedOutput {
        level: majority_level(retrieved_levels),
        rationale: None,
        status: ParseStatus::FallbackMajority,
    }
}

/// Strict JSON: the whole output, a fenced code block, or the outermost `{...}` span must be
/// an object whose `level` is an integer 1–5 (or a string holding one).
fn parse_json(raw: &str) -> Option<(Level, Option<String>)> {
    let trimmed = raw.trim();
    let mut candidates: Vec<&str> = alloc::vec![trimmed];
    if let Some(inner) = fenced_block(trimmed) {
        candidates.push(inner);
    }
    if let (Some(start), Some(end)) = (trimmed.find('{'), trimmed.rfind('}')) {
        if start < end {
            candidates.push(&trimmed[start..=end]);
        }
    }
    candidates.into_iter().find_map(|text| {
        let Value::Object(map) = serde_json::from_str::<Value>(text).ok()? else {
            return None;
        };
        let level = match map.get("level")? {
            Value::Number(n) => n.as_u64().and_then(|v| u8::try_from(v).ok()),
            Value::String(s) => s.trim().parse::<u8>().ok(),
            _ => None,
        }
        .and_then(Level::new)?;
        let rationale = map.get("rationale").and_then(Value::as_str).map(ToString::to_string);
        Some((level, rationale))
    })
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim())
}

/// First occurrence of `level` (ASCII case-insensitive) followed, after optional separators
/// and an optional `is`, by a standalone digit 1–5.
fn scan_level_keyword(raw: &str) -> Option<Level> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(pos) = find_ci(&bytes[from..], b"level") {
        let start = from + pos;
        from = start + 5;
        if start > 0 && bytes[start - 1].is_ascii_alphanumeric() {
            continue;
        }
        let mut i = start + 5;
        i = skip_separators(bytes, i);
        if bytes.len() >= i + 3 && bytes[i..i + 2].eq_ignore_ascii_case(b"is") && !bytes[i + 2].is_ascii_alphanumeric() {
            i = skip_separators(bytes, i + 2);
        }
        let Some(&d) = bytes.get(i) else { continue };
        if !(b'1'..=b'5').contains(&d) {
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let standalone = match next {
            None => true,
            Some(b'.') => !bytes.get(i + 2).is_some_and(u8::is_ascii_digit),
            Some(c) => !c.is_ascii_alphanumeric() && c != b'_',
        };
        if standalone {
            return Level::new(d - b'0');
        }
    }
    None
}

fn skip_separators(bytes: &[u8], mut i: usize) -> usize {
    let limit = i + 6;
    while i < bytes.len() && i < limit && matches!(bytes[i], b' ' | b'\t' | b':' | b'=' | b'-' | b'#' | b'*' | b'"' | b'\'' | b'~' | b'(' | b'[') {
        i += 1;
    }
    i
}

fn find_ci(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w.eq_ignore_ascii_case(needle))
}

/// Most frequent level; ties go to the lower level, and an empty list yields level 1.
pub fn majority_level(levels: &[Level]) -> Level {
    let mut counts = [0usize; LEVEL_COUNT];
    for level in levels {
        counts[level.index()] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Level::ALL[best]
}

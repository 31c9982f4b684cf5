//! The five Van Hiele levels.

use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of Van Hiele levels. Every level-indexed array in the crate has this length.
pub const LEVEL_COUNT: usize = 5;

/// A Van Hiele level of geometric reasoning, ordered from lowest to highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Visualization = 1,
    Analysis = 2,
    InformalDeduction = 3,
    Deduction = 4,
    Rigor = 5,
}

impl Level {
    pub const ALL: [Level; LEVEL_COUNT] = [
        Level::Visualization,
        Level::Analysis,
        Level::InformalDeduction,
        Level::Deduction,
        Level::Rigor,
    ];

    pub fn new(value: u8) -> Option<Level> {
        match value {
            1..=5 => Some(Self::ALL[usize::from(value) - 1]),
            _ => None,
        }
    }

    /// Numeric value in `1..=5`.
    pub fn value(self) -> u8 {
        self as u8
    }

    /// Zero-based position, for indexing level-sized arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Level> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Visualization => "Visualization",
            Level::Analysis => "Analysis",
            Level::InformalDeduction => "Informal Deduction",
            Level::Deduction => "Deduction",
            Level::Rigor => "Rigor",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.value())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = i64::deserialize(deserializer)?;
        u8::try_from(value)
            .ok()
            .and_then(Level::new)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("level {value} is outside 1..=5")))
    }
}

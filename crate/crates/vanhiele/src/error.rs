use std::path::PathBuf;

use vanhiele_core::corpus::{CorpusError, LineIssue};
use vanhiele_core::folds::FoldError;
use vanhiele_core::index::IndexError;
use vanhiele_core::prompt::PromptError;
use vanhiele_core::report::CompareError;
use vanhiele_core::skills::DictionaryError;
use vanhiele_core::vector::VectorError;

use crate::backend::BackendError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const DATA: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const BACKEND: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed document: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Dictionary { path: PathBuf, source: DictionaryError },
    #[error("{}: {issue}", path.display())]
    Record { path: PathBuf, issue: LineIssue },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Malformed { path: path.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } | Error::Prompt(_) | Error::Config(_) => exit::USAGE,
            Error::Backend(_) => exit::BACKEND,
            _ => exit::DATA,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! File formats, caches, model backends, cross-validation, and the command-line tool built
//! on [`vanhiele_core`].

pub mod backend;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod llm;
pub mod pipeline;
pub mod snapshot;
pub mod synthetic;

pub use vanhiele_core as model;
pub use error::{Error, Result};

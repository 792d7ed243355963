//! Command-line surface: shared run configuration and one function per
//! subcommand. The binary in `src/bin/capsnet.rs` is a thin argument
//! parser over these.

mod commands;
mod config;

pub use commands::{
    run_crossval, run_embed, run_features, run_predict, run_preprocess, run_train,
    NormalizeMode, ReferenceSpec,
};
pub use config::RunConfig;

use crate::embedding::EmbeddingError;
use crate::network::NetworkError;
use crate::preprocess::PreprocessError;
use crate::training::TrainingError;
use thiserror::Error;

/// Anything a subcommand can fail with; the binary prints it to stderr
/// and exits nonzero.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("labels file {path}, line {line}: {detail}")]
    Labels { path: String, line: usize, detail: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("could not access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

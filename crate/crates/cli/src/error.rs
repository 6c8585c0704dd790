use std::io;
use std::path::PathBuf;

use amuze::generate::GenerateError;
use amuze::metrics::MetricsError;
use amuze::model::{CheckpointError, ModelError};
use amuze::tokenizer::TokenizerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no MIDI files found under {0}")]
    NoFilesFound(PathBuf),
    #[error("{0}")]
    CorpusHandMissing(String),
    #[error("{0}")]
    IncompatibleCheckpoints(String),
    #[error("prompt {path}: {reason}")]
    BadPrompt { path: PathBuf, reason: String },
    #[error("{0}")]
    BadConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: TokenizerError },
    #[error("{path}: {source}")]
    Metrics { path: PathBuf, source: MetricsError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Stable identifier printed with every failure.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::NoFilesFound(_) => "NoFilesFound",
            CliError::CorpusHandMissing(_) => "CorpusHandMissing",
            CliError::IncompatibleCheckpoints(_) => "IncompatibleCheckpoints",
            CliError::BadPrompt { .. } => "BadPrompt",
            CliError::BadConfig(_) => "BadConfig",
            CliError::Io { .. } => "Io",
            CliError::Checkpoint { source, .. } => match source {
                CheckpointError::BadMagic => "BadMagic",
                CheckpointError::VersionMismatch { .. } => "VersionMismatch",
                CheckpointError::TruncatedFile => "TruncatedFile",
                CheckpointError::Corrupt(_) => "CorruptCheckpoint",
                CheckpointError::Io(_) => "Io",
            },
            CliError::Corpus { .. } => "BadCorpus",
            CliError::Metrics { source, .. } => match source {
                MetricsError::EmptyScore => "EmptyScore",
                MetricsError::NoOverlappingBars => "NoOverlappingBars",
                MetricsError::Midi(_) | MetricsError::Tokenizer(_) => "BadMidi",
            },
            CliError::Model(ModelError::EmptyCorpus) => "EmptyCorpus",
            CliError::Model(_) => "ModelError",
            CliError::Generate(_) => "GenerateError",
            CliError::Csv(_) => "Io",
        }
    }
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

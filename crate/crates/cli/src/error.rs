use std::path::PathBuf;

use biconvmf::corpus::CorpusError;
use biconvmf::eval::EvalError;
use biconvmf::factorize::FactorizeError;
use biconvmf::textcnn::CnnError;
use thiserror::Error;

/// Process exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const TRAINING: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{} already exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Training(_) => exit::TRAINING,
            CliError::Exists(_) | CliError::Io(_) => exit::OTHER,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidConfig(_) | CorpusError::EmbeddingDimension { .. } => {
                CliError::Config(e.to_string())
            }
            CorpusError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FactorizeError> for CliError {
    fn from(e: FactorizeError) -> Self {
        match e {
            FactorizeError::Config(_) | FactorizeError::Cnn(CnnError::Config(_)) => {
                CliError::Config(e.to_string())
            }
            FactorizeError::Codec(_) => CliError::Data(e.to_string()),
            FactorizeError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Factorize(f) => f.into(),
            EvalError::BadFraction(_)
            | EvalError::EmptyTrain { .. }
            | EvalError::NoRuns
            | EvalError::Threads(_) => CliError::Config(e.to_string()),
            EvalError::Empty | EvalError::NonFinite(_) => CliError::Data(e.to_string()),
        }
    }
}

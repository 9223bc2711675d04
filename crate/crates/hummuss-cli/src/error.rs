//! CLI failure taxonomy and the exit codes the tools document.

use thiserror::Error;

use crate::weights::WeightsError;

/// Every way an invocation can fail, mapped onto the documented exit codes:
/// 2 bad input data or flags, 3 weights/config/files, 4 unsupported mode.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input line {line}: {msg}")]
    Input { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("weights: {0}")]
    Weights(#[from] WeightsError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Mode(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Usage(_) => 2,
            CliError::Weights(_) | CliError::Config(_) | CliError::Io(_) => 3,
            CliError::Mode(_) => 4,
        }
    }
}

impl From<hummuss_core::Error> for CliError {
    fn from(e: hummuss_core::Error) -> Self {
        match e {
            hummuss_core::Error::InvalidMode(m) => CliError::Mode(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

use bpa_core::BpaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Input feature file could not be read or decoded.
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("solver error: {0}")]
    Solver(BpaError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Malformed { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Config(_) => 4,
            CliError::Output { .. } => 1,
        }
    }

    pub fn malformed(path: &std::path::Path, reason: impl Into<String>) -> Self {
        CliError::Malformed {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }

    pub fn output(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<BpaError> for CliError {
    fn from(e: BpaError) -> Self {
        match e {
            BpaError::InvalidConfig(_)
            | BpaError::InvalidParameter(_)
            | BpaError::InvalidTargetDim { .. }
            | BpaError::SeparationInfeasible { .. }
            | BpaError::TooLarge(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

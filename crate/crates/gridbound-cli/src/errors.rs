//! Error type carrying the process exit code contract:
//! 1 usage, 2 model/consistency, 3 solver non-convergence, 4 I/O.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line or configuration values → exit 1.
    #[error("{0}")]
    Usage(String),
    /// Model, abstraction, or input-file consistency failure → exit 2.
    #[error("{0}")]
    Model(String),
    /// The solver did not converge within its limits → exit 3.
    #[error("{0}")]
    Solver(String),
    /// Filesystem failure → exit 4.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    #[must_use]
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Model(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Prefixes the message with the pipeline stage that failed, keeping
    /// the exit code.
    #[must_use]
    pub fn in_stage(self, stage: &str) -> CliError {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("stage {stage}: {m}")),
            CliError::Model(m) => CliError::Model(format!("stage {stage}: {m}")),
            CliError::Solver(m) => CliError::Solver(format!("stage {stage}: {m}")),
            CliError::Io(m) => CliError::Io(format!("stage {stage}: {m}")),
        }
    }
}

pub type Result<T> = core::result::Result<T, CliError>;

impl From<gridbound::geometry::GeometryError> for CliError {
    fn from(e: gridbound::geometry::GeometryError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<gridbound::imdp::ImdpError> for CliError {
    fn from(e: gridbound::imdp::ImdpError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<gridbound::emdp::EmdpError> for CliError {
    fn from(e: gridbound::emdp::EmdpError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<gridbound::abstraction::AbstractionError> for CliError {
    fn from(e: gridbound::abstraction::AbstractionError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<gridbound::analysis::AnalysisError> for CliError {
    fn from(e: gridbound::analysis::AnalysisError) -> Self {
        match e {
            gridbound::analysis::AnalysisError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

use thiserror::Error;

/// Failure of a command, classified by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable manifest, compile or bind errors.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Problem(minopt::Error),

    /// The solve ran and failed.
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Problem(_) => 2,
            CliError::Solver(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<minopt::Error> for CliError {
    fn from(e: minopt::Error) -> Self {
        use minopt::Error as E;
        match e {
            E::NonFiniteCost { .. } | E::Internal(_) => CliError::Solver(e.to_string()),
            e => CliError::Problem(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

use diracsea_core::Error as CoreError;

/// Failures of a command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// A numerical tolerance or invariant failed; exit code 2.
    #[error("{0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonHermitian { .. }
            | CoreError::ZeroMode { .. }
            | CoreError::ModeCountMismatch { .. }
            | CoreError::ConjugationMismatch { .. }
            | CoreError::DegeneracyResolutionFailed { .. }
            | CoreError::NotOrthonormal { .. }
            | CoreError::ConvergenceFailure { .. }
            | CoreError::ZeroProbabilityConfiguration { .. }
            | CoreError::StepTooCoarse { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use roughvol_core::RoughVolError;

/// Failure of a CLI run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config entries, or input values. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// The computation itself failed (overflow, degenerate sample). Exit code 2.
    #[error("{0}")]
    Runtime(String),
    /// Missing or unreadable files, failed writes. Exit code 3.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<RoughVolError> for CliError {
    fn from(e: RoughVolError) -> Self {
        match e {
            RoughVolError::InvalidParameter(_)
            | RoughVolError::Domain(_)
            | RoughVolError::InsufficientData { .. }
            | RoughVolError::IncompatibleGrids => CliError::Validation(e.to_string()),
            RoughVolError::DegenerateSample(_)
            | RoughVolError::NumericalOverflow { .. }
            | RoughVolError::CalibrationFailed { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

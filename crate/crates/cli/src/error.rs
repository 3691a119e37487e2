use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("optimizer stopped at its iteration cap: {0}")]
    OptimizerCap(String),
    #[error("calibration mismatch: {0}")]
    Calibration(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::OptimizerCap(_) => 4,
            CliError::Calibration(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<slicer_core::Error> for CliError {
    fn from(e: slicer_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

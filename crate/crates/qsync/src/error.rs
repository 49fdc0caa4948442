use std::path::Path;
use std::process::ExitCode;

/// Failure of a command, carrying the process exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("confidence {confidence:.6} is below the required {required}")]
    LowConfidence { confidence: f64, required: f64 },
    #[error("coarse estimation failed: {0}")]
    CoarseFailed(String),
    #[error("only {completed} of {total} grid points completed")]
    GridIncomplete { completed: usize, total: usize },
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
            AppError::LowConfidence { .. } => 4,
            AppError::CoarseFailed(_) => 5,
            AppError::GridIncomplete { .. } => 6,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        AppError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<AppError> for ExitCode {
    fn from(e: AppError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

impl From<qsync_core::Error> for AppError {
    fn from(e: qsync_core::Error) -> Self {
        match e {
            qsync_core::Error::CoarseEstimationFailed(m) => AppError::CoarseFailed(m),
            other => AppError::Config(other.to_string()),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

use std::path::PathBuf;

/// Failures surfaced by the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::csv_io::CsvError),
    #[error(transparent)]
    Model(#[from] symreg_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl AppError {
    /// 2 for problems with the invocation or its inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) | AppError::Data(_) | AppError::Json { .. } => 2,
            AppError::Model(symreg_core::Error::InvalidConfig(_)) => 2,
            AppError::Model(_) | AppError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

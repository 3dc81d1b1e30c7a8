//! Harness errors mapped to process exit codes.

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric divergence at epoch {epoch}, batch {batch}: {source}")]
    Divergence {
        epoch: usize,
        batch: usize,
        #[source]
        source: glf_core::Error,
    },

    #[error("gradient check failed: {0}")]
    GradcheckFailed(String),

    #[error(transparent)]
    Core(#[from] glf_core::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// train/eval/gradcheck/toy-constraints/sweep share the exit-code map:
    /// 0 success, 1 config (or environment) error, 2 numeric divergence,
    /// 3 gradcheck failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Divergence { .. } => 2,
            CliError::GradcheckFailed(_) => 3,
            _ => 1,
        }
    }
}

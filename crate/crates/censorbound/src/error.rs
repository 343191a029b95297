use std::path::PathBuf;

use crate::config::ConfigError;
use crate::csv_io::IngestError;

/// Everything a run can fail with, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] censorbound_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialise results: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    /// 2 for bad configuration or input, 3 for numerical failures, 1 for
    /// anything else (e.g. the output directory is not writable).
    pub fn exit_code(&self) -> i32 {
        use censorbound_core::Error as E;
        match self {
            RunError::Config(_) | RunError::Ingest(_) => 2,
            RunError::Core(E::SingularCovariance | E::Numerical(_)) => 3,
            RunError::Core(_) => 2,
            RunError::Io { .. } | RunError::Json(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

/// Errors surfaced by the command-line layer, each with a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nrdf_core::Error),
    #[error("{0}")]
    Usage(String),
    /// A numerical method failed; the message names where.
    #[error("{0}")]
    NonConvergence(String),
    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
}

impl CliError {
    /// 2 for bad arguments or ranges, 3 for numerical non-convergence,
    /// 4 for failed verification, 1 for IO.
    pub fn exit_code(&self) -> i32 {
        use nrdf_core::Error as E;
        match self {
            CliError::Core(E::Numerical(_)) | CliError::Core(E::NonUniqueStationary(_)) => 3,
            CliError::NonConvergence(_) => 3,
            CliError::Core(_) | CliError::Usage(_) | CliError::Format { .. } => 2,
            CliError::Verification(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

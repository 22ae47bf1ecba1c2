//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RbdgError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph generation failed: {0}")]
    GraphGeneration(String),

    #[error("filter synthesis failed: {0}")]
    FilterSynthesis(String),

    #[error("singular linear system in {context}")]
    SingularSystem { context: String },

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("solver failed at outer iteration {outer}: {source}")]
    SolverAbort {
        outer: usize,
        #[source]
        source: Box<RbdgError>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RbdgError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        RbdgError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, RbdgError>;

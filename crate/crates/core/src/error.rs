use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator, the learner and the experiment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input fell outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value or layout is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape, role, tag).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A lookup index was past the end of its range.
    #[error("range error: {0}")]
    Range(String),

    /// Training produced a non-finite loss, gradient or parameter.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A replayed episode did not reproduce its log.
    #[error("replay diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// A file could not be parsed.
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors raised by the samplers, models and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition (bad argument, bad config).
    #[error("usage error: {0}")]
    Usage(String),

    /// Every weight in a population is zero, so no normalization is possible.
    #[error("degenerate weights: all weights are zero{}", .iteration.map(|k| format!(" at iteration {k}")).unwrap_or_default())]
    DegenerateWeights { iteration: Option<usize> },

    /// A factorization or geometric routine could not produce a finite answer.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Attaches an iteration index to a `DegenerateWeights` error; other variants pass through.
    pub fn at_iteration(self, k: usize) -> Self {
        match self {
            Error::DegenerateWeights { .. } => Error::DegenerateWeights { iteration: Some(k) },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse { .. } | Error::Io(_) => 1,
            Error::DegenerateWeights { .. } | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

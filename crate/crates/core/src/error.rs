use std::fmt;

/// Failure classes of the external reward worker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkerFailure {
    /// The worker process died or its pipes closed.
    Transport,
    /// A reply arrived but could not be parsed or did not match the request.
    Malformed,
    /// No reply within the configured timeout.
    Timeout,
}

impl fmt::Display for WorkerFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkerFailure::Transport => "transport error",
            WorkerFailure::Malformed => "malformed reply",
            WorkerFailure::Timeout => "timeout",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("total particle degeneracy at t={t}: every log-potential is -inf")]
    Degenerate { t: usize },

    #[error("reward worker {kind} (particle {particle}, step t={t}): {detail}")]
    Worker {
        kind: WorkerFailure,
        particle: usize,
        t: usize,
        detail: String,
    },

    #[error("reward worker failed to start: {0}")]
    WorkerStartup(String),

    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by bad user input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidInput(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped by the process exit code the CLI maps them to:
/// I/O and parse failures (1), precondition and calibration failures (2),
/// and internal invariant violations (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("{message}, line {line}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("empty window")]
    EmptyWindow,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("unknown weather preset {0:?}")]
    UnknownPreset(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code for this error: 1 I/O or parse, 2 precondition, 3 bug.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

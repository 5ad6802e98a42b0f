use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("degenerate normal: gradient magnitude {magnitude:e}")]
    DegenerateNormal { magnitude: f64 },

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical abort at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("loss backend failed on view {view}: {msg}")]
    Backend { view: usize, msg: String },

    #[error("protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

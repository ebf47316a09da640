use std::path::PathBuf;

use crate::log::TimeSeriesLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite input or a computation that failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Parameters violate a structural invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed log or results file. `line` is 1-based within the file.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A required voltage set point was never crossed.
    #[error("range error: {0}")]
    Range(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// Regression design has no spread in the regressor.
    #[error("degenerate design: {0}")]
    Degenerate(String),

    /// A cell left the safety window. The log recorded up to and including
    /// the offending sample is preserved.
    #[error("safety abort at t = {t_s} s: cell {cell} measured {voltage:.4} V outside [{v_min}, {v_max}] V")]
    SafetyAbort {
        cell: usize,
        voltage: f64,
        t_s: f64,
        v_min: f64,
        v_max: f64,
        partial: Box<TimeSeriesLog>,
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

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name} is not finite ({value})")))
    }
}

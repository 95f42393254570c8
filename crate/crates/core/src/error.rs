//! Crate-wide error type with a stable mapping onto process exit codes.

use thiserror::Error;

/// Error raised by any toolkit operation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments, out-of-range parameters, or malformed input data.
    #[error("validation: {0}")]
    Validation(String),

    /// An iterative solver hit its iteration cap before meeting its
    /// convergence tolerance. The message reports the best iterate found.
    #[error("convergence: {0}")]
    Convergence(String),

    /// Underlying operating-system I/O failure.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn convergence(msg: impl Into<String>) -> Self {
        Error::Convergence(msg.into())
    }

    /// Stable exit-code contract: 0 success, 2 validation, 3 convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Convergence(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Check that every value in a slice is finite; used by input validators.
pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{what} contains non-finite value {v}")));
    }
    Ok(())
}

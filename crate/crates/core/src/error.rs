use std::path::PathBuf;

/// Errors produced by the estimation routines and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A 1-based iteration index was out of range.
    #[error("step index {0} is invalid: schedules are indexed from k = 1")]
    Index(u64),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A NaN or infinity reached an iterate. `block` names the offending
    /// tracker block when one is known.
    #[error("non-finite value in {context}{}", block.map(|b| format!(" (block {b})")).unwrap_or_default())]
    NonFinite {
        context: &'static str,
        block: Option<usize>,
    },

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or precondition violation.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for numeric aborts, as opposed to bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Domain(_))
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("location is not part of the domain")]
    NotInDomain,

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("singular linear system (min pivot {min_pivot:e}, condition estimate {condition:e})")]
    Singular { min_pivot: f64, condition: f64 },

    #[error("domain hash mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: String, found: String },

    #[error("unknown epoch {0}")]
    UnknownEpoch(u64),

    #[error("epoch {0} is already frozen")]
    AlreadyFrozen(u64),

    #[error("epoch {0} is not frozen yet")]
    NotFrozen(u64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

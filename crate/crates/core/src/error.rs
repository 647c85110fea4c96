use thiserror::Error;

/// Errors produced by the simulator and its file formats.
#[derive(Debug, Error)]
pub enum CimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}`; valid names: {}", valid.join(", "))]
    NotFound {
        kind: &'static str,
        name: String,
        valid: Vec<String>,
    },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CimError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> CimError {
    CimError::InvalidArgument(msg.into())
}

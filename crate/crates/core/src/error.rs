use thiserror::Error;

/// Errors produced anywhere in the benchmarking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied a value outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The request exceeds what the implementation is willing to do
    /// (e.g. exhaustive enumeration above the configured limit).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// An object was used before it reached the required state.
    #[error("invalid state: {0}")]
    State(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used for machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Capability(_) => "capability",
            Error::State(_) => "state",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

/// Attaches the offending path to an I/O error.
pub(crate) fn at_path(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

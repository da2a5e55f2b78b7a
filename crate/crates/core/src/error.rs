use thiserror::Error;

/// Failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, layout or checkpoint shape.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with inconsistent arguments or in the wrong state.
    #[error("usage error: {0}")]
    Usage(String),
    /// A value violated a domain invariant (e.g. non-binary sparse reward).
    #[error("validation error: {0}")]
    Validation(String),
    /// A non-finite number appeared where a finite one is required.
    #[error("numeric error: non-finite {what} at index {index}")]
    Numeric { what: &'static str, index: usize },
    /// Not enough data yet for the requested operation; callers skip it.
    #[error("not ready: {0}")]
    NotReady(String),
    /// The shortest-path oracle was queried from a state with no path.
    #[error("oracle error: {0}")]
    Oracle(String),
    /// Checkpoint file is malformed.
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

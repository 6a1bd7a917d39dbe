use thiserror::Error;

/// Errors surfaced by the library.
///
/// The variants map onto the CLI exit codes: parameter/config problems,
/// capacity limits of the exact desk-scale algorithms, and internal
/// numerical assertions.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied parameters is violated.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The request exceeds a hard cap of an exact algorithm.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An internal numerical invariant failed.
    #[error("numerical assertion failed: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

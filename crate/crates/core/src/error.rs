use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A configuration value violates its invariants.
    #[error("configuration error: {0}")]
    Config(String),
    /// A precondition of the call was not met.
    #[error("contract error: {0}")]
    Contract(String),
    /// NaN or infinity appeared in the output of an operation.
    #[error("numeric error: non-finite value produced by {0}")]
    NonFinite(String),
    /// A sample cannot be normalized (zero standard deviation).
    #[error("degenerate sample: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

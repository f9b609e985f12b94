//! Error types shared across the toolkit.

/// Errors produced by model construction, tree queries, and measure arithmetic.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A model specification string could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A parameter is outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A path is too deep for the owning instance, or a requested depth
    /// exceeds what the instance supports.
    #[error("depth exceeded: {0}")]
    DepthExceeded(String),

    /// An enumeration would materialize more entries than the configured cap.
    #[error("enumeration cap exceeded: requested {requested} entries, cap {cap}")]
    CapExceeded { requested: u128, cap: u64 },

    /// Two distributions do not live on the same support.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A numerical routine produced NaN or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

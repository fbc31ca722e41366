use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("parameter out of domain: {0}")]
    Domain(String),
    /// The request would exceed a memory or work guard.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    /// Inconsistent combination of components (codebook, source, coloring).
    #[error("configuration error: {0}")]
    Config(String),
    /// A party received something the protocol does not allow.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// A closed-form bound was queried outside the regime where it is valid.
    #[error("out of regime: {0}")]
    OutOfRegime(String),
    /// Not enough signal to produce an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
pub(crate) use domain;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AbError>;

/// Errors surfaced by the numerical operations.
///
/// Every fallible operation reports *why* it could not produce a value at
/// the requested tolerance rather than silently degrading; callers such as
/// the CLI map these onto stable exit codes.
#[derive(Debug, Clone, Error)]
pub enum AbError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("regions overlap: {0}")]
    RegionOverlap(String),
    #[error("empty time regime: {0}")]
    EmptyRegime(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("inadmissible pair: {0}")]
    InadmissiblePair(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

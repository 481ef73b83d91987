//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading data, solving, or verifying.
#[derive(Debug, Error)]
pub enum Error {
    /// The file does not conform to the expected schema.
    #[error("malformed file: {0}")]
    MalformedFile(String),

    /// A matrix or vector dimension disagrees with the declared sizes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A NaN or infinity appeared where a finite number is required.
    #[error("non-finite entry in {0}")]
    NonFiniteEntry(String),

    /// Variances must satisfy `sigma_eps2 > 0` and `sigma_e2 >= 0`.
    #[error("invalid variance: {0}")]
    InvalidVariance(String),

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    /// The SVD backend did not converge.
    #[error("svd failed to converge")]
    SvdFailure,

    /// The decision scalar is undefined for `sigma_e2 = 0`; callers must take
    /// the least-squares fallback instead.
    #[error("sigma_e2 = 0: decision scalar undefined, use the LS fallback")]
    ZeroSigmaE,

    /// The dual variable was evaluated at or left of the rightmost pole.
    #[error("nu = {nu} violates the pole at {pole}")]
    PoleViolation { nu: f64, pole: f64 },

    /// The sign conditions for a bisection bracket do not hold; the caller
    /// dispatched the wrong case.
    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("bisection exceeded {0} iterations")]
    MaxIterExceeded(usize),

    /// The total-least-squares genericity condition is violated.
    #[error("TLS non-generic: {0}")]
    TlsNongeneric(String),

    /// An operation requiring full column rank was given a rank-deficient matrix.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// The degenerate `sigma_e2 = 0` fallback carries no KKT certificate.
    #[error("degenerate case: {0}")]
    DegenerateCase(String),

    /// The grid oracle is restricted to small dimensions.
    #[error("dimension {n} too large for this operation (max {max})")]
    DimensionTooLarge { n: usize, max: usize },

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Rejection sampling did not land in the requested case.
    #[error("instance generation timed out after {0} draws")]
    GenerationTimeout(usize),

    /// Solver options fail their own invariants.
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

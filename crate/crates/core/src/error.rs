use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// `(N, q)` outside the admissible range. The message names the violated bound.
    #[error("inadmissible exponents: {0}")]
    Inadmissible(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("field has zero mass")]
    ZeroField,

    #[error("field length {field} does not match grid size {grid}")]
    LengthMismatch { field: usize, grid: usize },

    #[error("root finder did not converge on [{lo}, {hi}]")]
    RootNotFound { lo: f64, hi: f64 },

    #[error("quadrature failed on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("non-finite value in energy term `{term}`")]
    NumericFailure { term: &'static str },

    #[error("continuation stage {stage} (eps = {eps}) stalled: {reason}")]
    StageStalled { stage: usize, eps: f64, reason: String },

    #[error("threshold predicate not monotone across bracket: {0}")]
    NonMonotone(String),
}

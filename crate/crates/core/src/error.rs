use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into two families: input validation (bad shapes, out of
/// domain parameters, malformed files) and numerical failures (matrices that
/// are not definite, solver breakdowns). [`Error::is_numerical`] tells them
/// apart; the CLI maps them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not strictly positive definite (min eigenvalue {min_eigenvalue:e}, threshold {threshold:e})")]
    NotSpd { min_eigenvalue: f64, threshold: f64 },

    #[error("symmetric part of the pricing matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPd { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("dimension {dim} is too large (limit {limit})")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("loss-optimal scale k* = {k} is not positive")]
    NonpositiveK { k: f64 },

    #[error("zero variance on diagonal entry {index}")]
    ZeroVariance { index: usize },

    #[error("at least {required} samples are required, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("non-finite value in row {row}")]
    NonFiniteData { row: usize },

    #[error("numerical solver failed: {0}")]
    SolverFailure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics on otherwise well-formed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. }
                | Error::NotSpd { .. }
                | Error::NotPd { .. }
                | Error::IllConditioned { .. }
                | Error::NonpositiveK { .. }
                | Error::SolverFailure(_)
        )
    }

    /// Short machine-readable tag used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPsd { .. } => "not_psd",
            Error::NotSpd { .. } => "not_spd",
            Error::NotPd { .. } => "not_pd",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DimensionTooLarge { .. } => "dimension_too_large",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonpositiveK { .. } => "nonpositive_k",
            Error::ZeroVariance { .. } => "zero_variance",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::NonFiniteData { .. } => "non_finite_data",
            Error::SolverFailure(_) => "solver_failure",
            Error::Domain(_) => "domain_error",
            Error::Parse { .. } => "parse_error",
            Error::Io(_) => "io_error",
        }
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

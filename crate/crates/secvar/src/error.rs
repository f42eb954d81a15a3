//! Crate-wide error type.
//!
//! Errors are grouped by how the CLI maps them to exit codes: input and
//! validation problems (exit 1), numerical failures such as non-regular
//! points or missing plateaus (exit 2), and internal invariant breaches
//! (exit 3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix is not antisymmetric: {0}")]
    NotAntisymmetric(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("Legendre condition violated: {0}")]
    LegendreCondition(String),

    #[error("not a regular point: {0}")]
    NonRegularPoint(String),

    #[error("matrices do not commute: {0}")]
    NonCommuting(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal invariant breach: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::NotSymmetric(_)
            | Error::NotAntisymmetric(_)
            | Error::NotPositiveDefinite(_)
            | Error::NonCommuting(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Io(_) => 1,
            Error::LegendreCondition(_) | Error::NonRegularPoint(_) => 2,
            Error::Internal(_) => 3,
        }
    }
}

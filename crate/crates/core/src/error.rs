use thiserror::Error;

/// Errors raised by the numerical routines and the cascade description loader.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} is not Hurwitz (largest real part of spectrum {max_real:.3e})")]
    NotHurwitz { what: String, max_real: f64 },

    #[error("Sylvester/Lyapunov operator is numerically singular: {0}")]
    SolverSingular(String),

    #[error("eigen/Schur decomposition failed to converge: {0}")]
    EigFailure(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("commutation matrix of oscillator {index} is singular or not antisymmetric")]
    SingularTheta { index: usize },

    #[error("matrix is not positive definite: {0}")]
    NonPositive(String),

    #[error("resolvent sI - A is singular at s = {0}")]
    SingularResolvent(String),

    #[error("leading covariance block of order {order} is singular")]
    SingularLeadingBlock { order: usize },

    #[error("matrix is not symplectic for oscillator {index} (residual {residual:.3e})")]
    NotSymplectic { index: usize, residual: f64 },

    #[error("{rejected} of {drawn} Monte Carlo draws produced a non-Hurwitz cascade")]
    TooManyRejections { rejected: usize, drawn: usize },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("coupling gradient is rank deficient (smallest eigenvalue of its Gram matrix {0:.3e})")]
    RankDeficientMu(f64),

    #[error("operation requires a one-mode oscillator, got state dimension {0}")]
    NotOneMode(usize),

    #[error("frequency-domain point z = 1 is excluded")]
    ZAtOne,

    #[error("z = {0} is outside the stability set")]
    NotInStabilitySet(String),

    #[error("H-infinity bisection failed: {0}")]
    BisectionFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Process exit code used by the command-line tool: 1 for input or
    /// validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::Schema { .. }
            | Error::DimensionMismatch { .. }
            | Error::SingularTheta { .. }
            | Error::NotHurwitz { .. }
            | Error::NotSymplectic { .. }
            | Error::NotOneMode(_)
            | Error::InvalidArgument(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

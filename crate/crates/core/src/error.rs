use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of an [`Error`](enum@Error), used to pick CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller supplied something outside the documented domain.
    Input,
    /// A numerical routine failed or a computed quantity failed its check.
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("not a generator: {0}")]
    NotGenerator(String),
    #[error("generator is reducible: state {0} cannot reach every other state")]
    Reducible(usize),
    #[error("variance of state {0} is negative")]
    NegativeVariance(usize),
    #[error("degenerate model: every state has zero variance and zero drift")]
    Degenerate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero asymptotic drift with q = 0: {0}")]
    ZeroDrift(&'static str),
    #[error("asymptotic drift is {0}, expected zero")]
    NonZeroDrift(f64),
    #[error("defective spectrum near root {0}; perturb q or parameters")]
    DefectiveSpectrum(String),
    #[error("ill-conditioned {what}: condition estimate {cond:e}; perturb q or parameters")]
    IllConditioned { what: &'static str, cond: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("matrix exponential overflows (norm {0:e})")]
    Overflow(f64),
    #[error("{what} failed its check: residual {residual:e} > {tolerance:e}")]
    Residual {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotSquare { .. }
            | Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::NotGenerator(_)
            | Error::Reducible(_)
            | Error::NegativeVariance(_)
            | Error::Degenerate
            | Error::InvalidArgument(_)
            | Error::ZeroDrift(_)
            | Error::NonZeroDrift(_) => ErrorKind::Input,
            Error::DefectiveSpectrum(_)
            | Error::IllConditioned { .. }
            | Error::Singular(_)
            | Error::Overflow(_)
            | Error::Residual { .. }
            | Error::NoConvergence(_) => ErrorKind::Numerical,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponent p = {0} is outside (1, inf)")]
    InvalidExponent(f64),

    #[error("t2 = {t2} outside the log-MGF domain t2 < {bound}")]
    DomainError { t2: f64, bound: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("adaptive quadrature hit the {intervals}-interval cap (error estimate {err_est:e})")]
    NoConvergence { intervals: usize, err_est: f64 },

    #[error("Newton iteration failed to converge: {0}")]
    NewtonFailure(String),

    #[error(
        "continuation stalled at a = {reached} while targeting a = {target}: point is outside the effective domain"
    )]
    DomainExceeded { target: f64, reached: f64 },

    #[error("degenerate level-set curvature L1 = {0}")]
    DegenerateCurvature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

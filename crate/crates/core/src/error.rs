use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degrees of freedom must exceed 2, got {0}")]
    InvalidDof(f64),

    #[error("innovation parameters (nu={nu}, xi={xi}) give a non-positive variance term {value}")]
    NonPositiveVariance { nu: f64, xi: f64, value: f64 },

    #[error("invalid model: {0}")]
    InvalidSpec(String),

    #[error("matrix dimension error: {0}")]
    Dimension(String),

    #[error("dominant eigenvalue did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("volatility exceeded {guard:e} at step {step}; the process is likely not stationary")]
    Explosion { step: usize, guard: f64 },

    #[error("moment estimate of order {order} failed the tail-stability check (relative change {change:.3})")]
    MomentDiverged { order: f64, change: f64 },

    #[error("only {found} particles exceed the radial threshold, need at least {required}")]
    TooFewParticles { found: usize, required: usize },

    #[error("effective sample size {ess:.1} fell below the floor {floor:.1}")]
    DegenerateWeights { ess: f64, floor: f64 },

    #[error("ensemble did not converge within {max_iterations} iterations")]
    NoConvergence { max_iterations: usize },

    #[error("rho_k - 1 does not change sign on [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("tail-chain acceptance rate {rate:e} is below {floor:e}")]
    RejectionStall { rate: f64, floor: f64 },

    #[error("no exceedances of threshold {0}")]
    NoExceedances(f64),

    #[error("tail skewness {0} is degenerate for the requested quantity")]
    DegenerateDelta(f64),

    #[error("model is not strictly stationary: {0}")]
    NotStationary(String),

    #[error("config error: {0}")]
    Config(String),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    NonConvergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidDof(_)
            | Error::NonPositiveVariance { .. }
            | Error::InvalidSpec(_)
            | Error::Dimension(_)
            | Error::Config(_) => ErrorClass::Config,
            Error::Convergence { .. } | Error::NoConvergence { .. } | Error::NoCrossing { .. } => {
                ErrorClass::NonConvergence
            }
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

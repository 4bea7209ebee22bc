use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: estimated error {achieved:.3e} > tolerance {requested:.3e} after {intervals} intervals")]
    Quadrature {
        achieved: f64,
        requested: f64,
        intervals: usize,
    },

    #[error(
        "root finder did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    RootNotConverged { iterations: usize, residual: f64 },

    #[error("root not bracketed on [{lo}, {hi}]: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("support violation: q({at}) = 0 where p = {p:.3e}")]
    SupportViolation { at: f64, p: f64 },

    #[error("density does not integrate to one (mass = {mass:.8})")]
    NotNormalized { mass: f64 },

    #[error("non-finite log target at initial point {0:?}")]
    NonFiniteInit(Vec<f64>),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

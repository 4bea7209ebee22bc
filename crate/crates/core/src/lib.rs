//! General Bayesian updating with robust divergence losses, plus posterior
//! predictive stability diagnostics.

pub mod divergences;
pub mod error;
pub mod losses;
pub mod models;
pub mod predictive;
pub mod quadrature;
pub mod sampler;
pub mod stability;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Likelihood families and priors.

mod binary;
mod continuous;
mod prior;
mod regression;
mod texp;

pub use binary::{BinaryFamily, BinaryModel, DEFAULT_T};
pub use continuous::{ContinuousFamily, ContinuousModel, DEFAULT_SCALE_FLOOR, LOG_DENSITY_FLOOR};
pub use prior::{
    dirichlet_log_density, dirichlet_margin_tail, elicit_dirichlet_concentration,
    inverse_gamma_log_density, PriorSpec,
};
pub use regression::{RegressionData, RegressionModel, ResidualFamily};
pub use texp::{normaliser_residual, t_exp, t_log_partition};

pub(crate) use continuous::student_t_log_norm;

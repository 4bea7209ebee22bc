//! Config-driven experiments for generalised Bayesian stability.
//!
//! A TOML [`config::ExperimentConfig`] picks an experiment, a data source,
//! losses and sampler settings. [`experiments::run_experiment`] runs it,
//! writing tab-separated tables, a `manifest.toml` and a `summary.txt` into
//! the output directory.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{DataSource, ExperimentConfig, ExperimentKind, ExperimentOptions};
pub use error::{CliError, Result};
pub use experiments::{run_experiment, Outcome};
pub use report::{emit_report, RunManifest};

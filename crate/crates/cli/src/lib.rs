//! Command-line pipeline: configuration, artifact formats and the
//! `sample`/`transform`/`evaluate`/`fit`/`sobol`/`grid`/`run`/`benchmark` stages.

pub mod commands;
pub mod config;
pub mod error;
pub mod tables;

pub use config::{Context, GridRequest, GridScale, Overrides, RunConfig};
pub use error::{CliError, CliResult};

//! Experiment runner for `stnn-core`: configuration, file formats and the
//! pipeline behind the `stnn` binary.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;

pub use config::{ExperimentArgs, ExperimentConfig, ModelKind, System};
pub use error::{CliError, Result};

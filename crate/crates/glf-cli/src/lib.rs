//! Experiment harness over the representation-learning core: configuration,
//! training/evaluation runners, and the CLI command implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

//! Experiment runner: each subcommand reads and writes files in a work
//! directory so stages can be rerun independently.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{AttackerVariant, ExperimentConfig, SuiteKind, TrainSettings};
pub use error::{CliError, Result};

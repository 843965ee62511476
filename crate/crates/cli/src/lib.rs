//! Experiment runner for the `kancfd` trainer: config files, run
//! directories with hashed artifacts, reports, plot dumps and re-run
//! verification. The `kancfd` binary is a thin wrapper over this crate.

pub mod artifacts;
pub mod config;
pub mod dumps;
pub mod error;
pub mod report;
pub mod verify;

pub use artifacts::{load_model_json, parse_summary_json, run_experiment, ModelArtifact, RunOutput, Summary};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::report;
pub use verify::verify;

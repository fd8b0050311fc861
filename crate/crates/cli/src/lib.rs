//! Operational surface of the simulator: config files, experiment
//! execution, sweeps, self-tests, and CSV emission.

pub mod config;
pub mod runner;
pub mod selftest;

pub use config::{parse_config, parse_config_str, DatasetSpec, RunConfig};
pub use runner::{cmd_run, cmd_sweep, mask_wall_time, RunArtifacts, SweepAxis};
pub use selftest::{run_selftest, SuiteResult};

use thiserror::Error;

/// CLI failures, split by exit code: config errors exit 1, runtime errors
/// exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<dcfl_core::flcore::FlError> for CliError {
    fn from(e: dcfl_core::flcore::FlError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<dcfl_core::data::DataError> for CliError {
    fn from(e: dcfl_core::data::DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

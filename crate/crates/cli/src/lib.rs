//! Batch driver for `cflow_core`: JSON run configs, subcommands and the
//! `check` suite.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod expr;

pub use commands::{dispatch, Command};
pub use config::{parse_config, RunConfig, Scenario};
pub use error::CliError;

//! Configuration-driven runs behind the `oposim` binary.

mod commands;
pub mod config;

pub use commands::{run, CliError, Command, FailureKind, RunReport, DEFAULT_OUT_DIR, SUMMARY_FILE};
pub use config::{ConfigError, Overrides};

//! Configuration, file formats and subcommands of the `qheom` executable.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

pub use commands::CliError;
pub use config::{Config, ConfigError};

//! Library side of the `cqns` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use error::CliError;

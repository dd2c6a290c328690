//! Command-line driver and HTTP suggestion service.

pub mod cli;
pub mod server;

pub use cli::{run, Cli, CliError};

//! Command-line front end: configuration, the four subcommands and their
//! on-disk artifacts.

pub mod args;
pub mod commands;
pub mod config;
mod error;

pub use args::{Cli, Command, GlobalArgs};
pub use config::RunConfig;
pub use error::{exit, CliError};

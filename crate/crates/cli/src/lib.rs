//! The `mmdl` command line: every analysis stage as a subcommand, plus a
//! `pipeline` that runs them in order and records a hashed bundle manifest.

pub mod bundle;
pub mod commands;
pub mod error;
pub mod pipeline;
pub mod svg;
pub mod tables;

pub use commands::{run, Cli};
pub use error::CliError;

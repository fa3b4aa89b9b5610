//! Library side of the `mapprior` command-line tool: argument parsing,
//! configuration, data ingestion, report types and the subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod forest;
pub mod ingest;
pub mod report;

pub use cli::Cli;
pub use error::{CliError, CliResult};

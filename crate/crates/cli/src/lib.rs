//! Batch front-end for the atom-number models: loads a TOML run
//! configuration, runs one scenario and writes CSV/JSON artifacts (plus
//! optional SVG plots) into a directory keyed by the configuration hash.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

pub use commands::{execute, Command, Outcome, RunOptions};
pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, CliResult};

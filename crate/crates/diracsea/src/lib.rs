//! Command-line front end and file formats for `diracsea-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod output;
pub mod parallel;
pub mod selftest;

pub use error::{CliError, CliResult};

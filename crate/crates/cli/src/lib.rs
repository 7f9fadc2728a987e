//! File formats, run directories and the `psrcast` command line.
//!
//! Subcommands: `analyze`, `embed`, `synth`, `train`, `evaluate`, `explain`,
//! `ablate`. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
//! failure, 1 I/O.

pub mod cli;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod run;
pub mod weights_io;

pub use error::{CliError, CliResult};

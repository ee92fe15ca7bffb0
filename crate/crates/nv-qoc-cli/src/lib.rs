//! Command-line front end for the NV-center optimal-control library.
//!
//! The binary reads a single TOML problem description, runs one of four
//! commands (`simulate`, `optimize`, `sense`, `limits`) and writes
//! deterministic tables and reports: the same config and seed always produce
//! byte-identical files. See [`config`] for the accepted schema and
//! [`error`] for the exit-code contract.

pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::Command;
pub use error::{CliError, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_UNSUPPORTED};

//! CLI error type with the exit-code contract.

use std::fmt;

/// Exit code for a run that completed.
pub const EXIT_OK: i32 = 0;
/// Exit code for a config that failed to parse or validate.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for a numeric failure while computing.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit code for a structurally valid config requesting an unsupported
/// combination of features.
pub const EXIT_UNSUPPORTED: i32 = 4;

/// Failure modes of a CLI run, each carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// The config file could not be read, parsed or validated.
    Config(String),
    /// The computation itself failed (non-finite values, invalid states).
    Numeric(String),
    /// The config is valid but asks for a combination the tool cannot do.
    Unsupported(String),
    /// An output file could not be written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Unsupported(_) => EXIT_UNSUPPORTED,
            CliError::Io(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            CliError::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nv_qoc::Error> for CliError {
    fn from(e: nv_qoc::Error) -> CliError {
        match e {
            nv_qoc::Error::GradientUnavailable { .. } => {
                CliError::Unsupported(format!("gradient unavailable: {e}"))
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

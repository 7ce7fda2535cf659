//! Command-level errors with stable exit codes: 0 ok, 2 config error,
//! 3 data error, 4 numeric abort.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent configuration / arguments (exit 2).
    Config(String),
    /// Missing, malformed, or mismatched inputs and IO failures (exit 3).
    Data(String),
    /// Non-finite values produced during computation (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Wraps an IO error with the path it concerned.
    pub fn io(context: &str, path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{context} {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

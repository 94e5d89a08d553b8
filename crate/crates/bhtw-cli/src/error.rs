//! CLI error type and the exit-code contract.
//!
//! Every failure is either a *validation* problem (bad configuration, bad
//! arguments, unusable output directory — exit code 2) or a *numeric*
//! problem (the requested computation started but broke down — exit code 3).
//! Success is exit code 0. The mapping from core errors follows
//! [`bhtw_core::error::CoreError::is_numeric`].

use bhtw_core::error::CoreError;

/// Process exit code for configuration and input errors.
pub const EXIT_VALIDATION: u8 = 2;
/// Process exit code for numeric failures during a run.
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Rejected before any computation: configuration, arguments, IO.
    #[error("{0}")]
    Validation(String),
    /// The computation itself failed (instability, degenerate data, …).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    /// Shorthand for a validation error built from any displayable value.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        if err.is_numeric() {
            CliError::Numeric(err.to_string())
        } else {
            CliError::Validation(err.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Validation(format!("io error: {err}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Validation(format!("json error: {err}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

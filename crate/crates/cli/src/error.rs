use std::path::Path;

use apw_core::ApwError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{0}")]
    Core(#[from] ApwError),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(ApwError::SingularFiber { .. }) => EXIT_SINGULAR,
            CliError::Core(
                ApwError::NeumannNotApplicable { .. }
                | ApwError::NeumannBudget { .. }
                | ApwError::WindowTooSmall { .. },
            ) => EXIT_TOLERANCE,
            _ => EXIT_USAGE,
        }
    }
}

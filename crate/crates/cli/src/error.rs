//! Process-level error type; the variant picks the exit code.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or bad configuration. Exit code 1.
    Config(String),
    /// A pipeline stage failed on real data. Exit code 2.
    Stage { stage: &'static str, message: String },
    /// Unexpected internal failure (filesystem, serialization). Exit code 3.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Stage { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn stage(stage: &'static str, err: impl fmt::Display) -> Self {
        CliError::Stage { stage, message: err.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Stage { stage, message } => write!(f, "{stage} failed: {message}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Internal(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Internal(err.to_string())
    }
}

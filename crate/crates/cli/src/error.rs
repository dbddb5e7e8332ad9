use std::fmt;
use std::path::Path;

use drnews::Error;
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const MISSING_ARTIFACT: i32 = 4;
    pub const INPUT_DATA: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    pub const HASH_MISMATCH: i32 = 7;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    fn new(error: &'static str, exit_code: i32, message: impl Into<String>) -> Self {
        CliError {
            error,
            exit_code,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError::new("internal", exit::INTERNAL, message)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", exit::USAGE, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new("config", exit::CONFIG, message)
    }

    pub fn missing(path: &Path) -> Self {
        CliError::new(
            "missing_artifact",
            exit::MISSING_ARTIFACT,
            format!("{} not found; run the stage that produces it first", path.display()),
        )
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError::new("input_data", exit::INPUT_DATA, message)
    }

    pub fn hash_mismatch(message: impl Into<String>) -> Self {
        CliError::new("hash_mismatch", exit::HASH_MISMATCH, message)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serialises")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::new("missing_artifact", exit::MISSING_ARTIFACT, message)
            }
            Error::Io { .. } => CliError::internal(message),
            Error::InvalidConfig(_) | Error::MissingLexicon => CliError::config(message),
            Error::NonFinite { .. } | Error::NoConvergence { .. } | Error::Diverged { .. } => {
                CliError::new("numerical", exit::NUMERICAL, message)
            }
            _ => CliError::input(message),
        }
    }
}

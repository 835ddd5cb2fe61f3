// SPDX-License-Identifier: Apache-2.0

//! Command errors and their structured stderr form.

use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("artifact digests disagree: {0}")]
    DigestMismatch(String),
    #[error("{0:#}")]
    Failed(#[from] anyhow::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::FileNotFound(_) => "FileNotFound",
            CliError::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
            CliError::DigestMismatch(_) => "DigestMismatch",
            CliError::Failed(_) => "Failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::ConfigInvalid(_) => 3,
            CliError::FileNotFound(_) => 4,
            CliError::SchemaVersionMismatch { .. } => 5,
            CliError::DigestMismatch(_) => 6,
        }
    }

    /// One-line JSON object written to stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() });
        if let CliError::FileNotFound(p) = self {
            v["path"] = json!(p.display().to_string());
        }
        v.to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Wraps any error as `Failed`.
pub fn failed(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Failed(e.into())
}

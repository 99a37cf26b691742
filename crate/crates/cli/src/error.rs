//! Error type and process exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_ARTIFACT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration, unwritable output.
    #[error("config error: {0}")]
    Config(String),
    /// Training or rollout failed numerically.
    #[error("runtime divergence: {0}")]
    Divergence(String),
    /// A file exists but does not match what was expected.
    #[error("artifact mismatch: {0}")]
    Artifact(String),
    /// Required files are absent.
    #[error("missing artifacts:\n{}", list(.0))]
    Missing(Vec<PathBuf>),
}

fn list(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("  {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Artifact(_) | CliError::Missing(_) => EXIT_ARTIFACT,
        }
    }

    /// Failure to write under the output directory.
    pub fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Config(format!("cannot write {}: {e}", path.display()))
    }

    /// Failure to read an existing artifact.
    pub fn read(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Artifact(format!("cannot read {}: {e}", path.display()))
    }
}

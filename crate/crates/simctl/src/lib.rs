//! Library behind the `simctl` binary: config loading and the four subcommands.

pub mod commands;
pub mod config;
pub mod profiles;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{preprocess, profile, report, simulate, PreprocessArgs, PreprocessSummary};
pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl ToString) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// 1 for broken invariants, 2 for anything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            _ => 2,
        }
    }
}

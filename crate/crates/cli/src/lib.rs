//! Command-line driver for `brpsnn`: config files, checkpoints, and the
//! `train`, `eval`, `bench`, `gen-synth` and `encode-preview` commands.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod preview;
pub mod run;

use thiserror::Error;

/// Failure classes, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }
}

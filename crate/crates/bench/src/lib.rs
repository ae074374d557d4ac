//! Config files, CSV traces, summary tables, verification suites and the
//! subcommands of the `mda` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod stats;
pub mod suites;

use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error: {0}")]
    Core(#[from] mda_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Process exit status of every subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    VerifyFailure = 1,
    ConfigError = 2,
    NumericAbort = 3,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e.code())
    }
}

impl BenchError {
    pub fn exit(&self) -> Exit {
        Exit::ConfigError
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] acgame_core::Error),
    #[error("{0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Core(acgame_core::Error::Config(_)) => exit::CONFIG_ERROR,
            Self::Core(_) | Self::Run(_) => exit::RUN_ERROR,
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const RUN_ERROR: i32 = 2;
    pub const CONFIG_ERROR: i32 = 3;
    pub const NOT_CONVERGED: i32 = 4;
    pub const VALIDATION_FAILED: i32 = 5;
}

use std::path::{Path, PathBuf};

use probetime_core::Error as CoreError;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const FS_GUARD: u8 = 3;
    pub const EVALUATION: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("refusing to overwrite {}: {message}", path.display())]
    Guard { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Core { context: String, source: CoreError },
    #[error("{0}")]
    Evaluation(String),
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn guard(path: &Path, message: impl Into<String>) -> Self {
        CliError::Guard {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        match source {
            CoreError::Config { key, message } => CliError::Config { key, message },
            source => CliError::Core {
                context: context.into(),
                source,
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Guard { .. } => exit::FS_GUARD,
            CliError::Io { .. } | CliError::Core { .. } | CliError::Evaluation(_) => exit::EVALUATION,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a path to I/O failures.
pub trait IoContext<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}

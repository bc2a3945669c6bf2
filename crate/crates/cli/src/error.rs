use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] zfepr::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Wraps a library error raised while reading `path`, keeping the path in
    /// the message and the exit code of the underlying failure.
    pub fn from_core_at(path: &Path, e: zfepr::Error) -> Self {
        match e {
            zfepr::Error::Io(source) => CliError::io(path, source),
            other => match exit_code_of(&other) {
                EXIT_IO => CliError::io(path, std::io::Error::other(other.to_string())),
                EXIT_NUMERICAL => CliError::Numerical(format!("{}: {other}", path.display())),
                _ => CliError::Validation(format!("{}: {other}", path.display())),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Core(e) => exit_code_of(e),
        }
    }
}

fn exit_code_of(e: &zfepr::Error) -> i32 {
    match e {
        zfepr::Error::Io(_) => EXIT_IO,
        zfepr::Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        zfepr::Error::NonFiniteModel { .. } => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Fit(String),

    #[error("{}: {source}", path.display())]
    Core {
        path: PathBuf,
        #[source]
        source: tpxspec::Error,
    },

    #[error(transparent)]
    Pipeline(#[from] tpxspec::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Attaches the file being processed to a pipeline error.
    pub fn at(path: impl AsRef<Path>, source: tpxspec::Error) -> Self {
        match source {
            tpxspec::Error::Io(e) => CliError::io(path, e),
            other => CliError::Core {
                path: path.as_ref().to_path_buf(),
                source: other,
            },
        }
    }

    /// 1 validation, 2 I/O, 3 fit or convergence failure.
    pub fn exit_code(&self) -> ExitCode {
        let core_code = |e: &tpxspec::Error| match e {
            tpxspec::Error::Io(_) => 2,
            tpxspec::Error::Calibration(_) | tpxspec::Error::InsufficientData(_) => 3,
            _ => 1,
        };
        ExitCode::from(match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Fit(_) => 3,
            CliError::Core { source, .. } | CliError::Pipeline(source) => core_code(source),
        })
    }
}

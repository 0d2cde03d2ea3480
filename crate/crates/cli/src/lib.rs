//! Command-line front end: configuration parsing, dispatch to the studies,
//! output files with a hashed manifest, and exit statuses.

use std::path::{Path, PathBuf};

pub mod config;
pub mod dispatch;
pub mod job;
pub mod output;

pub use config::{Command, ConfigError, ConfigErrors};
pub use dispatch::{dispatch, Exit, Outcome};
pub use job::{parse_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Core(#[from] meanfield::Error),
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), msg: e.to_string() }
    }

    pub fn exit(&self) -> Exit {
        use meanfield::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => Exit::Config,
            CliError::Core(E::Diverged { .. } | E::StudyInvalid(_) | E::InsufficientTrials(_)) => Exit::Numerical,
            CliError::Core(_) => Exit::Config,
        }
    }
}

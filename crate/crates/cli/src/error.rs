use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Core(#[from] nowcast_core::Error),

    #[error("cannot write {}: {message}", .path.display())]
    Output { path: PathBuf, message: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for configuration and parse problems, 1 for everything that fails
    /// while computing or writing results.
    pub fn exit_code(&self) -> i32 {
        use nowcast_core::Error as E;
        match self {
            CliError::Config(_) | CliError::MissingInput(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::Parse(_) | E::Csv(_) | E::Json(_)) => 2,
            CliError::Core(_) | CliError::Output { .. } | CliError::Runtime(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

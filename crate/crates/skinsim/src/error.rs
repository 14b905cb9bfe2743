use skinsim_core::Error;

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or unwritable output: exit 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// The numerics failed: exit 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(what: &str, path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{what} {}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidModel(_) | Error::SectorTooLarge(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

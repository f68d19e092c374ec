use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

/// Failures of a CLI run. Assertion failures are not errors: they are
/// recorded in the report and mapped to the exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: wavescope_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Attaches the name of the core module an error came from.
pub trait ModuleContext<T> {
    fn module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> ModuleContext<T> for wavescope_core::Result<T> {
    fn module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { module, source })
    }
}

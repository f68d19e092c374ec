//! Experiment runner: JSON-configured pipelines over the wavescope core with
//! deterministic JSON, CSV, SVG and binary artifacts.
// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod medium;
pub mod report;
pub mod svg;

use std::path::Path;

pub use commands::run_experiment;
pub use config::{CommandKind, ConfigError, ExperimentConfig, Overrides};
pub use error::CliError;
pub use report::RunReport;

/// Reads and validates the config file at `path`.
pub fn load_config(command: CommandKind, path: &Path, overrides: Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ExperimentConfig::from_str(command, &text, overrides)?)
}

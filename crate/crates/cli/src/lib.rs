//! Library side of the `daod` command-line tool: configuration loading,
//! the `run`, `sweep` and `synth` commands, and the report schema.
//!
//! Exit codes: 1 for configuration errors, 2 for numerical failures, 3 for
//! I/O errors.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_run, cmd_sweep, cmd_synth, execute};
pub use config::{Input, Mode, Overrides, RunConfig, SweepGrid};
pub use error::{CliError, CliResult};

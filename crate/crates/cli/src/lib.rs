//! Experiment runner for Moreau-envelope LQR meta-policies: configuration,
//! file formats and the `generate`, `train`, `adapt`, `eval` and `compare`
//! commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use commands::{cmd_adapt, cmd_compare, cmd_eval, cmd_generate, cmd_train, Format};
pub use config::ExperimentConfig;
pub use error::CliError;

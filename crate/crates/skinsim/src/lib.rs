//! Experiment runner for `skinsim-core`: configuration files, parallel
//! ensembles with deterministic output, and the CSV/JSON artifacts.

pub mod analyze;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use config::RunConfig;
pub use error::CliError;

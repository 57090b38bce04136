//! Command-line pipeline for `idm-fpr`: input handling, staged execution,
//! result files and figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod outputs;
pub mod run;

pub use config::{InputPaths, RunConfig};
pub use error::CliError;
pub use run::{run_pipeline, RunReport};

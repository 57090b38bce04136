use std::path::PathBuf;

use idm_fpr::aggregate::AggregateError;
use idm_fpr::datamodel::{DataError, ValidationReport};
use idm_fpr::montecarlo::McError;
use idm_fpr::pipeline::PipelineError;
use idm_fpr::synthdata::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),
    #[error("no mortality input: give a mortality table or a fitted mortality surface")]
    NoMortality,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid dataset:\n{}", render_report(.0))]
    Invalid(ValidationReport),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("reading input: {0}")]
    Data(#[from] DataError),
    #[error("fitting: {0}")]
    Fit(#[from] PipelineError),
    #[error("estimation: {0}")]
    MonteCarlo(#[from] McError),
    #[error("aggregation: {0}")]
    Aggregate(#[from] AggregateError),
    #[error("simulation: {0}")]
    Synth(#[from] SynthError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
        CliError::Format { path: path.into(), message: message.to_string() }
    }
}

fn render_report(r: &ValidationReport) -> String {
    r.issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

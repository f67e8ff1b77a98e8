//! Error class to exit code mapping.
//!
//! The binary's exit contract: 0 success, 2 unusable inputs or
//! configuration, 3 endpoint failure, 4 unparseable model output, 5 partial
//! batch failure. Every library error funnels into one of those classes
//! here, so the subcommands can use `?` freely and still exit correctly.

use aigve_core::dataset::DatasetError;
use aigve_core::metrics::MetricsError;
use aigve_core::sampler::SamplerError;
use aigve_core::schema::{BuildError, ParseError};
use aigve_core::weighter::WeightError;
use aigve_gateway::GatewayError;
use aigve_refine::RefineError;
use std::path::Path;
use thiserror::Error;

/// A fatal failure, already phrased for the terminal.
#[derive(Debug, Error)]
pub enum CliError {
    /// Missing files, malformed datasets, misaligned ids, bad flags or
    /// config, unset auth variables. Exit 2.
    #[error("{0}")]
    Input(String),
    /// The endpoint could not be reached, timed out, or refused the request.
    /// Exit 3.
    #[error("{0}")]
    Network(String),
    /// The endpoint replied, but the completion was unusable even after a
    /// retry. Exit 4.
    #[error("{0}")]
    Parse(String),
    /// The batch ran to the end, but some records failed. Exit 5.
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Network(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Partial(_) => 5,
        }
    }

    /// An io failure at `path`, phrased with the path.
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<GatewayError> for CliError {
    fn from(err: GatewayError) -> Self {
        use GatewayError::*;
        match &err {
            MissingAuth(_) | InvalidEndpoint(_) | InvalidInput(_) => {
                CliError::Input(err.to_string())
            }
            Endpoint { .. } | Transport { .. } | Timeout { .. } | GenerationTimeout => {
                CliError::Network(err.to_string())
            }
            MalformedResponse(_) | ParseFailedTwice { .. } | UnparseableVerdict(_)
            | EmptyRevision | Json(_) => CliError::Parse(err.to_string()),
        }
    }
}

// Refinement-loop failures reaching the top level are all problems with the
// run directory, the trace journals, or the loop config — agent failures stay
// inside the batch summary and map to the partial-failure exit instead.
impl From<RefineError> for CliError {
    fn from(err: RefineError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(err: SamplerError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<WeightError> for CliError {
    fn from(err: WeightError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(err: DatasetError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(err: BuildError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(err: ParseError) -> Self {
        CliError::Parse(err.to_string())
    }
}

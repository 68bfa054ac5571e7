use std::path::Path;

use er_bounds::dataset::DataError;
use er_bounds::matching::MatchError;
use er_bounds::sweep::SweepError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_GATE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("quality gate failed: {0}")]
    Gate(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(DataError::InfeasibleSplit(_) | DataError::BadSpec(_)) => EXIT_USAGE,
            CliError::Match(MatchError::DegenerateLabels { .. }) => EXIT_USAGE,
            CliError::Sweep(SweepError::Grid(_) | SweepError::Metric(_)) => EXIT_USAGE,
            CliError::Gate(_) => EXIT_GATE,
            _ => EXIT_DATA,
        }
    }
}

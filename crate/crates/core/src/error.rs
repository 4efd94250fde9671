use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    StageOrder,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::StageOrder => 4,
            ErrorCategory::Numerical => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("stage order: {0}")]
    StageOrder(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),

    #[error(transparent)]
    PowerFlow(#[from] crate::powerflow::PowerFlowError),

    #[error(transparent)]
    Traffic(#[from] crate::traffic::TrafficError),

    #[error(transparent)]
    Link(#[from] crate::linker::LinkError),

    #[error(transparent)]
    Adoption(#[from] crate::adoption::AdoptionError),

    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),

    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::StageOrder(_) => ErrorCategory::StageOrder,
            Error::Numerical(_) => ErrorCategory::Numerical,
            Error::PowerFlow(e) => match e {
                crate::powerflow::PowerFlowError::Unconverged { .. } => ErrorCategory::Numerical,
                _ => ErrorCategory::Data,
            },
            Error::Scenario(crate::scenario::ScenarioError::InvalidConfig(_)) => {
                ErrorCategory::Config
            }
            Error::Synth(crate::synth::SynthError::Infeasible(_)) => ErrorCategory::Config,
            Error::Traffic(crate::traffic::TrafficError::NonPositiveStep(_)) => {
                ErrorCategory::Config
            }
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

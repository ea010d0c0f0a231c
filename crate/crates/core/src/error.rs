use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown constraint `{0}`")]
    UnknownConstraint(String),

    #[error("unknown EVSE `{0}`")]
    UnknownEvse(String),

    #[error("rate vector has {got} entries, network has {expected} EVSEs")]
    RateLength { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid session: {0}")]
    InvalidSession(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("invalid tariff: {0}")]
    InvalidTariff(String),

    #[error("point does not violate the cone constraint (norm {norm} <= limit {limit})")]
    NotViolated { norm: f64, limit: f64 },

    #[error("sessions `{first}` and `{second}` overlap on EVSE `{evse}`")]
    OverlappingSessions {
        evse: String,
        first: String,
        second: String,
    },

    #[error("offline horizon needs {needed} variables, budget is {budget}; split the workload into shorter windows")]
    HorizonTooLarge { needed: usize, budget: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            source,
        }
    }
}

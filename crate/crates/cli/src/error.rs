//! Error classification for the process exit code contract:
//! 1 config error, 2 data error, 3 numerical failure.

use sparse_time::data::DataError;
use sparse_time::decompose::DecomposeError;
use sparse_time::eval::EvalError;
use sparse_time::linalg::LinalgError;
use sparse_time::model::ModelError;
use sparse_time::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Decompose(inner) => inner.into(),
            DataError::Linalg(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::RankOutOfRange { .. } => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<DecomposeError> for CliError {
    fn from(e: DecomposeError) -> Self {
        match e {
            DecomposeError::InvalidWindow { .. } => CliError::Config(e.to_string()),
            DecomposeError::Linalg(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
            TrainError::EmptySplit { .. } | TrainError::Empty | TrainError::LengthMismatch { .. } => {
                CliError::Data(e.to_string())
            }
            TrainError::NonFiniteGradient { .. } | TrainError::Model(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoComponents => CliError::Config(e.to_string()),
            EvalError::Empty | EvalError::LengthMismatch { .. } => CliError::Data(e.to_string()),
            EvalError::WrongMode | EvalError::Model(_) => CliError::Numeric(e.to_string()),
        }
    }
}

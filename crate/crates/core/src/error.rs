use std::path::PathBuf;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::ingest::IngestError;
use crate::nn::NnError;
use crate::train::TrainError;

/// Process exit codes used by the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("all {0} models failed")]
    AllModelsFailed(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => exit::USAGE,
            Error::Nn(NnError::Spec { .. }) => exit::USAGE,
            Error::Train(TrainError::Config(_)) => exit::USAGE,
            Error::Train(TrainError::NonFinite { .. }) | Error::AllModelsFailed(_) => exit::NUMERIC,
            _ => exit::DATA,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 1);
        assert_eq!(Error::Train(TrainError::NonFinite { epoch: 1, batch: 2 }).exit_code(), 3);
        assert_eq!(Error::Train(TrainError::Split("small".into())).exit_code(), 2);
        assert_eq!(Error::Eval(EvalError::Empty).exit_code(), 2);
        assert_eq!(Error::AllModelsFailed(3).exit_code(), 3);
    }
}

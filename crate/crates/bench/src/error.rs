use std::path::PathBuf;

use pdes::error::{EngineError, ModelError, PoolError, TopologyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl BenchError {
    /// 1 usage, 2 verification or engine failure, 3 capacity or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) | BenchError::Model(_) => 1,
            BenchError::Topology(TopologyError::Parse(_)) => 1,
            BenchError::Topology(_) | BenchError::Io { .. } | BenchError::Csv { .. } => 3,
            BenchError::Engine(EngineError::Pool(PoolError::HorizonExceeded { .. })) => 3,
            BenchError::Engine(_) | BenchError::Verification(_) => 2,
        }
    }
}

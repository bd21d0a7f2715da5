use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),
    #[error("unknown client id {client_id} (num_clients = {num_clients})")]
    UnknownClient {
        client_id: usize,
        num_clients: usize,
    },
    #[error("mask mismatch: {0}")]
    MaskMismatch(String),
    #[error("infeasible memory budget: {budget} bytes < minimum {minimum} bytes")]
    InfeasibleBudget { budget: u64, minimum: u64 },
    #[error("delta was encoded for mask {found:#018x}, expected {expected:#018x}")]
    ForeignMask { expected: u64, found: u64 },
    #[error("clock regression: now step {now} precedes received step {received}")]
    ClockRegression { now: u64, received: u64 },
    #[error("buffer not full: {len} of {capacity} updates")]
    BufferNotFull { len: usize, capacity: usize },
    #[error("missing update from client {0}")]
    MissingClient(usize),
    #[error("trace contains no evaluation records")]
    NoEvals,
    #[error("decode error: {0}")]
    Decode(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

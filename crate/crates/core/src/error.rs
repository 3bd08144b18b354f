use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0}")]
    Usage(String),

    #[error("input of {needed} units does not fit on {machines} machines of {capacity} units")]
    Capacity {
        needed: usize,
        machines: usize,
        capacity: usize,
    },

    #[error("round {round}: machine {machine} holds {load} units but local memory is {limit}")]
    MemoryExceeded {
        round: usize,
        machine: usize,
        load: usize,
        limit: usize,
    },

    #[error("round {round}: machine {machine} moved {volume} units but the per-round message budget is {limit}")]
    MessageExceeded {
        round: usize,
        machine: usize,
        volume: usize,
        limit: usize,
    },

    #[error("round {round}: key group {key} holds {size} units but local memory is {limit}")]
    KeyOverflow {
        round: usize,
        key: String,
        size: usize,
        limit: usize,
    },

    #[error("bucket {bucket} needs {required} units but only {capacity} are available; raise local memory or eps")]
    BucketOverflow {
        bucket: String,
        required: usize,
        capacity: usize,
    },

    #[error("oracle refuses input: {0}")]
    OracleRefusal(String),

    #[error("no candidate threshold was feasible, even after reseeding the estimator")]
    EstimatorFailure,
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } | Error::Usage(_) | Error::OracleRefusal(_) => 1,
            Error::Capacity { .. }
            | Error::MemoryExceeded { .. }
            | Error::MessageExceeded { .. }
            | Error::KeyOverflow { .. }
            | Error::BucketOverflow { .. } => 2,
            Error::EstimatorFailure => 3,
        }
    }

    pub fn is_resource(&self) -> bool {
        self.exit_code() == 2
    }
}

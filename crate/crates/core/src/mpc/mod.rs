//! Simulated massively parallel computation.

mod computation;
mod config;
mod report;

pub use computation::{fingerprint, stream_rng, MpcComputation, Record, RoundTrace};
pub use config::{
    log_rounds, MpcConfig, DEFAULT_C_B, DEFAULT_C_MSG, DEFAULT_C_SORT, DEFAULT_MEMORY_FLOOR,
};
pub use report::ResourceReport;

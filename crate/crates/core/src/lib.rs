//! Massive-MIMO uplink detection library.
//!
//! The centerpiece is an alternating-minimization (AltMin) detector that
//! solves the box relaxation of the maximum-likelihood problem with
//! closed-form per-iteration updates and no Gram matrix or matrix inversion.
//! Exact MMSE/ZF detectors and a brute-force ML search serve as baselines,
//! and a Monte-Carlo harness measures bit error rates and instrumented
//! real-multiplication counts so convergence, BER parity, and complexity
//! crossover can be reproduced deterministically.

pub mod altmin;
pub mod baselines;
pub mod cli;
pub mod harness;
pub mod mat;
pub mod metrics;
pub mod model;

/// Unified error type for the library and the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported modulation order {0}: supported orders are 4 and 16")]
    UnsupportedModulation(u32),
    #[error("bit vector has length {got} but 2*n_t*bits_per_real_dim = {want}")]
    BitLengthMismatch { got: usize, want: usize },
    #[error("vector has length {got} but {want} is required")]
    LengthMismatch { got: usize, want: usize },
    #[error("bit vectors must contain only 0 or 1 (offending index {0})")]
    NonBinaryBit(usize),
    #[error("channel column {col} has zero norm; the system is degenerate")]
    DegenerateChannel { col: usize },
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index}); ZF needs a full-column-rank channel")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("ML enumeration of {candidates} candidates exceeds the limit {limit}")]
    MlTooLarge { candidates: u128, limit: u128 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config file error: {0}")]
    ConfigFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool construction failed: {0}")]
    ThreadPool(String),
}

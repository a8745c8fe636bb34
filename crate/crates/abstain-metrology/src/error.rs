//! Error type shared by the whole crate.

use crate::spin::HalfSpin;
use thiserror::Error;

/// Errors produced by decomposition, solvers, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A log-space intermediate would overflow when exponentiated.
    #[error("overflow guard tripped: log magnitude {log_magnitude} exceeds representable range")]
    OverflowGuard { log_magnitude: f64 },

    /// A probe failed its normalization invariant.
    #[error("probe not normalized: |sum c_m^2 - 1| = {deviation:e}")]
    Normalization { deviation: f64 },

    /// Probe coefficients must be nonnegative.
    #[error("negative probe coefficient c[{index}] = {value}")]
    NegativeCoefficient { index: usize, value: f64 },

    /// Probe coefficient vector has the wrong length for the declared n.
    #[error("coefficient vector length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },

    /// Operation requested on a block with negligible probability.
    #[error("block j = {j} is degenerate (p_j below threshold)")]
    DegenerateBlock { j: HalfSpin },

    /// An iterative solver hit its iteration cap.
    #[error("{context}: no convergence after {iterations} iterations")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
    },

    /// Rejection sampling proposal exceeded its certified envelope.
    #[error("density {value} exceeds rejection envelope {envelope}; density model is inconsistent")]
    EnvelopeViolation { value: f64, envelope: f64 },

    /// Success probability outside (0, 1].
    #[error("success probability {s} outside (0, 1]")]
    InvalidSuccess { s: f64 },

    /// A vector that must have positive norm was zero.
    #[error("zero vector where a normalized profile was required")]
    ZeroVector,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("probe file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Path simulators: an exact stationary-increment Gaussian sampler for
//! constant volatility and an explicit finite-difference scheme with
//! stochastic volatility.

mod exact;
mod fd;
mod seed;
mod volatility;

pub use exact::{simulate_exact_stationary, ExactSampler};
pub use fd::{
    simulate_fd, simulate_fd_with_rates, BoundaryKind, FdGridConfig, FdOutput, InitialCondition,
    RealizedVolatility,
};
pub use seed::{derive_stream, SeedSpec};
pub use volatility::VolatilityModel;

use thiserror::Error;

use crate::constants::ConstantsError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "circulant embedding spectrum has min eigenvalue {min_eig:.3e} and the \
         Toeplitz fallback is capped at n = 32768 (requested {n})"
    )]
    EmbeddingNotPsd { min_eig: f64, n: usize },
    #[error("stability violation: {0}")]
    StabilityViolation(String),
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
}

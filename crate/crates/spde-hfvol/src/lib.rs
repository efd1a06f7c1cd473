//! High-frequency variation statistics for the damped stochastic heat
//! equation with stochastic volatility.
//!
//! The crate simulates observations of the mild solution on a regular time
//! grid, computes normalized (multi)power variation functionals, and turns
//! the associated limit theorems into estimators with studentized confidence
//! intervals: integrated volatility for known and estimated spatial noise
//! correlation index α, plus two estimators of α itself. A Monte Carlo
//! harness replicates experiments to check bias, RMSE, coverage and the
//! normality of studentized statistics.

pub mod constants;
pub mod estimators;
pub mod ingest;
pub mod model;
pub mod montecarlo;
mod parallel;
pub mod simulate;
pub mod special;
pub mod variation;

pub use model::{
    EstimateReport, ModelError, ModelParams, MultipowerKind, MultipowerSpec, NoiseKind,
    ObservedPath, SamplingScheme,
};

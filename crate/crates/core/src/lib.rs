//! Grid-based hidden Markov model filtering, entropy-rate estimation and
//! analyticity diagnostics.
//!
//! The crate implements three parameterized model families (finite,
//! mixture-of-densities, truncated nonlinear state-space), the optimal
//! filter and its complex-parameter continuation, joint-chain kernels with
//! geometric-ergodicity diagnostics, Monte Carlo estimators of entropy and
//! log-likelihood rates with `1/n` extrapolation, complex-step and
//! Cauchy-integral analyticity probes, and checkers for the structural
//! assumptions the theory rests on.
//!
//! The numeric core is generic over the real scalar (`f32`/`f64`) via
//! [`scalar::Real`]; the `*64` aliases below are the concrete types the
//! command-line front end works with.

pub mod analytic;
pub mod cli;
pub mod config;
pub mod error;
pub mod filter;
pub mod fixtures;
pub mod kernels;
pub mod measures;
pub mod models;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod verify;

pub use error::{HmmError, Result};

/// Default scalar for the command-line tools.
pub type Real64 = f64;
/// Complex value over the default scalar.
pub type C64 = num_complex::Complex<f64>;
pub type GridSpace64 = measures::GridSpace<f64>;
pub type GridMeasure64 = measures::GridMeasure<f64>;
pub type ParameterPoint64 = measures::ParameterPoint<f64>;
pub type FilterState64 = filter::FilterState<f64>;
pub type RateEstimate64 = rates::RateEstimate<f64>;

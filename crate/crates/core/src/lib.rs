//! Dependence-robust conditional independence testing for time-varying
//! multivariate time series.

pub mod basis;
pub mod cli;
pub mod covest;
pub mod engine;
pub mod error;
pub mod modelsel;
pub mod rng;
pub mod simlab;
pub mod sieve;
pub mod ts;

pub use error::{Error, ErrorClass, Result};

//! Bias-aware inference for linear functionals and empirical Bayes quantities in the
//! Gaussian deconvolution model X = mu + N(0, 1), mu ~ G.

pub mod bins;
pub mod calibrator;
pub mod config;
pub mod conic;
pub mod error;
pub mod fourier;
pub mod functional;
pub mod hermite;
pub mod modulus;
pub mod pilot;
pub mod prior;
pub mod simulation;
pub mod special;
pub mod tuning;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

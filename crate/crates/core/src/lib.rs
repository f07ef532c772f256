//! Bayesian estimation of multivariate skew-normal and skew-t distributions.

pub mod chain_io;
pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod gibbs;
pub mod horseshoe;
pub mod model;
pub mod numerics;
pub mod simstudy;
pub mod skewt;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

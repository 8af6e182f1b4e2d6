//! Ghost imaging with a parametric down-conversion source: stochastic
//! Monte Carlo simulation, closed-form oracle images and convergence metrics.

pub mod config;
pub mod correlator;
pub mod detection;
pub mod error;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod optics;
pub mod oracle;
pub mod runner;
pub mod source;

pub use error::{Error, Result};

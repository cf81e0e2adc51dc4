//! Gradient-based simulated parameter estimation.
//!
//! When a likelihood is only available through simulation, the score of each
//! observation is a quotient of two integrals. Plugging Monte Carlo averages
//! into that quotient biases the gradient. The estimators in [`mle`], [`vi`]
//! and [`smc`] instead track each quotient with a fast stochastic
//! approximation ([`sa::GradientTracker`]) while the parameter moves on a
//! slower schedule.
//!
//! [`harness`] runs replicated experiments and writes CSV summaries.

pub mod error;
pub mod harness;
pub mod mle;
pub mod models;
pub mod sa;
pub mod smc;
pub mod trace;
pub mod vi;

pub use error::{Error, Result};

//! Benchmark simulators together with unbiased single-draw estimators of the
//! observation density and its parameter gradient.
//!
//! Each model exposes a latent draw `x` and a deterministic map
//! `(x, y, θ) -> (g1, g2)` such that `E[g1] = ∇θ p(y; θ)` and
//! `E[g2] = p(y; θ)`. The estimators are built by conditioning on part of the
//! noise and keeping the closed-form conditional density of the rest. The
//! deterministic map is public so tests can pin the latent draw.
//!
//! Every model also answers with the exact pair (`oracle` mode), which turns
//! a stochastic-approximation run into deterministic gradient ascent and is
//! used to check algorithm logic in isolation from estimator noise.

mod hmm;
mod linear;
mod location;

pub use hmm::{kalman_loglik_and_grad, kalman_mle, kalman_steps, HmmKernels, HmmPath, KalmanStep, RandomWalkHmm};
pub use linear::LinearScaleModel;
pub use location::LocationModel;

use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How the density pair is obtained at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    /// Batch averages of conditional Monte Carlo draws.
    #[default]
    ConditionalMc,
    /// Exact density and gradient (zero variance).
    Oracle,
}

impl EstimatorMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::ConditionalMc => "conditional_mc",
            EstimatorMode::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional_mc" => Ok(EstimatorMode::ConditionalMc),
            "oracle" => Ok(EstimatorMode::Oracle),
            other => Err(Error::config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

/// One draw of the estimator pair at a given `(y, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPairSample {
    /// Estimate of `∇θ p(y; θ)`.
    pub g1: Vec<f64>,
    /// Estimate of `p(y; θ)`.
    pub g2: f64,
}

/// A simulator whose observation density admits unbiased single-draw
/// estimators.
pub trait EstimatorModel: Sync {
    /// The latent noise shared across observations within one batch.
    type Latent: Copy + Send;

    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Draws `count` i.i.d. observations at `theta`.
    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], count: usize, rng: &mut R) -> Vec<f64>;

    fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Latent;

    /// Writes the `g1` draw into `grad` (length `d`) and returns `g2`.
    fn pair_from_latent(&self, latent: Self::Latent, y: f64, theta: &[f64], grad: &mut [f64]) -> f64;

    /// Writes `∇θ p(y; θ)` into `grad` and returns `p(y; θ)`.
    fn exact_pair(&self, y: f64, theta: &[f64], grad: &mut [f64]) -> f64;

    fn draw_estimator_pair<R: Rng + ?Sized>(&self, y: f64, theta: &[f64], rng: &mut R) -> EstimatorPairSample {
        let latent = self.draw_latent(rng);
        let mut g1 = vec![0.0; self.dim()];
        let g2 = self.pair_from_latent(latent, y, theta, &mut g1);
        EstimatorPairSample { g1, g2 }
    }

    fn oracle_pair(&self, y: f64, theta: &[f64]) -> EstimatorPairSample {
        let mut g1 = vec![0.0; self.dim()];
        let g2 = self.exact_pair(y, theta, &mut g1);
        EstimatorPairSample { g1, g2 }
    }
}

/// Density of `N(0, variance)` at `x`.
pub fn normal_pdf(x: f64, variance: f64) -> f64 {
    (-0.5 * x * x / variance).exp() / (2.0 * PI * variance).sqrt()
}

pub fn std_normal_pdf(x: f64) -> f64 {
    normal_pdf(x, 1.0)
}

/// Closed-form MLE of the linear-scale model, `sqrt(mean(y²) - 1)`.
pub fn analytic_mle(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    let second_moment = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    if second_moment < 1.0 {
        return Err(Error::Domain(format!(
            "mean of squares {second_moment} < 1 has no interior maximiser"
        )));
    }
    Ok((second_moment - 1.0).sqrt())
}

/// Exact posterior `(mean, variance)` of the location model under a standard
/// normal prior.
pub fn analytic_posterior(y: &[f64]) -> Result<(f64, f64)> {
    if y.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    let n = y.len() as f64;
    let sum: f64 = y.iter().sum();
    Ok((sum / (1.0 + n), 1.0 / (1.0 + n)))
}

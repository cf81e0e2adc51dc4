//! Simulated maximum likelihood.
//!
//! [`run_mts_mle`] couples a [`GradientTracker`] (fast scale) with projected
//! gradient ascent on θ (slow scale). [`run_sts_mle`] is the single-scale
//! baseline that plugs the ratio of batch estimates straight into the
//! Robbins–Monro step and inherits its ratio bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{EstimatorMode, EstimatorModel};
use crate::sa::{euclidean_norm, BoxRegion, GradientTracker, StepSchedule, TrackerInit};
use crate::trace::{guarded_ratio, RunTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct MleConfig {
    pub theta0: Vec<f64>,
    pub region: BoxRegion,
    pub fast: StepSchedule,
    pub slow: StepSchedule,
    /// Latent draws per iteration (`N`).
    pub batch: usize,
    /// Iterations (`K`).
    pub iterations: usize,
    pub estimator: EstimatorMode,
    /// Starting value of the gradient tracker (multi-time-scale only).
    pub tracker_init: TrackerInit,
    pub seed: u64,
}

impl MleConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.theta0.len() != dim || self.region.dim() != dim {
            return Err(Error::Shape {
                context: "initial parameter",
                expected: dim,
                found: self.theta0.len(),
            });
        }
        if !self.region.contains(&self.theta0) {
            return Err(Error::config(format!(
                "initial value {:?} lies outside the feasible box",
                self.theta0
            )));
        }
        if !self.fast.separates_from(&self.slow) {
            return Err(Error::config(
                "fast step exponent must be strictly smaller than the slow one",
            ));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

/// Fills `g1` (`T * d`) and `g2` (`T`) with batch-averaged estimates. One
/// batch of latent draws is shared by all observations.
pub(crate) struct BatchEstimator<'a, M: EstimatorModel> {
    model: &'a M,
    latents: Vec<M::Latent>,
    scratch: Vec<f64>,
}

impl<'a, M: EstimatorModel> BatchEstimator<'a, M> {
    pub(crate) fn new(model: &'a M, batch: usize) -> Self {
        BatchEstimator {
            model,
            latents: Vec::with_capacity(batch),
            scratch: vec![0.0; model.dim()],
        }
    }

    /// Returns the number of latent draws consumed.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn estimate(
        &mut self,
        mode: EstimatorMode,
        batch: usize,
        y: &[f64],
        theta: &[f64],
        rng: &mut ChaCha8Rng,
        g1: &mut [f64],
        g2: &mut [f64],
    ) -> u64 {
        let d = self.model.dim();
        match mode {
            EstimatorMode::Oracle => {
                for (t, &obs) in y.iter().enumerate() {
                    g2[t] = self.model.exact_pair(obs, theta, &mut g1[t * d..(t + 1) * d]);
                }
                0
            }
            EstimatorMode::ConditionalMc => {
                self.latents.clear();
                self.latents.extend((0..batch).map(|_| self.model.draw_latent(rng)));
                let inv = 1.0 / batch as f64;
                for (t, &obs) in y.iter().enumerate() {
                    let num = &mut g1[t * d..(t + 1) * d];
                    num.fill(0.0);
                    let mut den = 0.0;
                    for &x in &self.latents {
                        den += self.model.pair_from_latent(x, obs, theta, &mut self.scratch);
                        for (n, s) in num.iter_mut().zip(&self.scratch) {
                            *n += s;
                        }
                    }
                    num.iter_mut().for_each(|n| *n *= inv);
                    g2[t] = den * inv;
                }
                batch as u64
            }
        }
    }
}

fn check_data(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::config("at least one observation is required"));
    }
    Ok(())
}

/// Multi-time-scale MLE. Returns the full trajectory; the estimate is the
/// last iterate.
pub fn run_mts_mle<M: EstimatorModel>(model: &M, y: &[f64], cfg: &MleConfig) -> Result<RunTrace> {
    let d = model.dim();
    cfg.validate(d)?;
    check_data(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(cfg.theta0.clone(), cfg.iterations);
    let mut estimator = BatchEstimator::new(model, cfg.batch);
    let mut tracker = GradientTracker::zeros(y.len(), d);
    let mut g1 = vec![0.0; y.len() * d];
    let mut g2 = vec![0.0; y.len()];
    let mut theta = cfg.theta0.clone();

    for k in 1..=cfg.iterations as u64 {
        trace.simulation_calls +=
            estimator.estimate(cfg.estimator, cfg.batch, y, &theta, &mut rng, &mut g1, &mut g2);
        if k == 1 && cfg.tracker_init == TrackerInit::FirstRatio {
            trace.guard_events += tracker.set_ratio(&g1, &g2)?;
        }
        let grad = tracker.reduce();
        tracker.update(&g1, &g2, cfg.fast.step(k)?)?;
        let beta = cfg.slow.step(k)?;
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th += beta * g;
        }
        cfg.region.project_in_place(&mut theta)?;
        trace.tracker_norms.push(euclidean_norm(&grad));
        trace.thetas.push(theta.clone());
    }
    Ok(trace.finish(started))
}

/// Single-time-scale baseline: `θ += β Σ_t G1(t) / G2(t)` with guarded
/// denominators.
pub fn run_sts_mle<M: EstimatorModel>(model: &M, y: &[f64], cfg: &MleConfig) -> Result<RunTrace> {
    let d = model.dim();
    cfg.validate(d)?;
    check_data(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(cfg.theta0.clone(), cfg.iterations);
    let mut estimator = BatchEstimator::new(model, cfg.batch);
    let mut g1 = vec![0.0; y.len() * d];
    let mut g2 = vec![0.0; y.len()];
    let mut theta = cfg.theta0.clone();
    let mut grad = vec![0.0; d];

    for k in 1..=cfg.iterations as u64 {
        trace.simulation_calls +=
            estimator.estimate(cfg.estimator, cfg.batch, y, &theta, &mut rng, &mut g1, &mut g2);
        grad.fill(0.0);
        for (t, den) in g2.iter().enumerate() {
            for (g, num) in grad.iter_mut().zip(&g1[t * d..(t + 1) * d]) {
                *g += guarded_ratio(*num, *den, &mut trace.guard_events);
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "single-time-scale gradient",
                block: None,
            });
        }
        let beta = cfg.slow.step(k)?;
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th += beta * g;
        }
        cfg.region.project_in_place(&mut theta)?;
        trace.tracker_norms.push(euclidean_norm(&grad));
        trace.thetas.push(theta.clone());
    }
    Ok(trace.finish(started))
}

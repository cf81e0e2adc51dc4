//! Particle-filter score estimation for hidden Markov models and the
//! stochastic-approximation MLE built on it.
//!
//! Every particle carries the augmented chain `(S, Z, W)`: the hidden state,
//! its pathwise derivative `Z = ∂S/∂θ`, and the running sum `W` of
//! observation-density scores along its ancestry,
//!
//! ```text
//! Z_t = ∂h/∂θ + (∂h/∂s) Z_{t-1}
//! W_t = W_{t-1} + (∂_s p(y_t | S_t) Z_t + ∂_θ p(y_t | S_t)) / p(y_t | S_t)
//! ```
//!
//! With predictive weights `w` at step `t`, the numerator and denominator of
//! the score of `log p(y_t | y_{1:t-1})` are estimated by
//!
//! ```text
//! G1(t) = Σ_j w_j p(y_t | S_t^j) (W_t^j - W̄_{t-1}),    G2(t) = Σ_j w_j p(y_t | S_t^j)
//! ```
//!
//! where `W̄_{t-1}` is the `w`-weighted mean of the cumulants before the
//! step. All weight arithmetic runs in log space.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{kalman_steps, EstimatorMode, RandomWalkHmm};
use crate::sa::{euclidean_norm, BoxRegion, GradientTracker, StepSchedule, TrackerInit};
use crate::trace::{guarded_ratio, RunTrace};

/// How the tangent `Z` is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentMode {
    /// `Z_t = ∂h/∂θ + (∂h/∂s) Z_{t-1}`.
    #[default]
    FullRecursion,
    /// `Z_t = ∂h/∂θ`, dropping the inherited term.
    Phi4Only,
}

impl TangentMode {
    pub fn name(&self) -> &'static str {
        match self {
            TangentMode::FullRecursion => "full",
            TangentMode::Phi4Only => "phi4",
        }
    }
}

impl std::str::FromStr for TangentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_recursion" => Ok(TangentMode::FullRecursion),
            "phi4" | "phi4_only" => Ok(TangentMode::Phi4Only),
            other => Err(Error::config(format!("unknown tangent mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: f64,
    pub tangent: f64,
    pub cumulant: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub resample_count: usize,
}

impl ParticleSystem {
    /// `count` particles at `state` with zero tangent and cumulant and
    /// uniform weights.
    pub fn new(count: usize, state: f64) -> Self {
        let weight = 1.0 / count as f64;
        ParticleSystem {
            particles: vec![
                Particle {
                    state,
                    tangent: 0.0,
                    cumulant: 0.0,
                    weight,
                };
                count
            ],
            resample_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Weighted mean of the cumulants.
    pub fn cumulant_mean(&self) -> f64 {
        self.particles.iter().map(|p| p.weight * p.cumulant).sum()
    }
}

/// Moves every particle one transition forward and accumulates its score.
/// Returns `log p(y | S_t^j)` per particle.
pub fn propagate<R: Rng + ?Sized>(
    system: &mut ParticleSystem,
    model: &RandomWalkHmm,
    y: f64,
    theta: f64,
    mode: TangentMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut log_density = Vec::with_capacity(system.len());
    for p in &mut system.particles {
        let noise: f64 = rng.sample(StandardNormal);
        let prev = p.state;
        p.state = model.transition(prev, theta, noise);
        // Transition derivatives are taken at the previous state.
        let k = model.kernels(y, prev, theta);
        p.tangent = match mode {
            TangentMode::FullRecursion => k.phi4 + k.dh_ds * p.tangent,
            TangentMode::Phi4Only => k.phi4,
        };
        let (score_theta, score_state) = model.observation_scores(y, p.state, theta);
        p.cumulant += score_state * p.tangent + score_theta;
        if !(p.cumulant.is_finite() && p.state.is_finite()) {
            return Err(Error::NonFinite {
                context: "particle propagation",
                block: None,
            });
        }
        log_density.push(model.log_observation_density(y, p.state, theta));
    }
    Ok(log_density)
}

/// Effective sample size `1 / Σ w²` of normalised weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Domain("weights must be non-negative with positive sum".into()));
    }
    let sum_sq: f64 = weights.iter().map(|w| (w / total).powi(2)).sum();
    Ok(1.0 / sum_sq)
}

/// Multinomial resampling of whole `(S, Z, W)` triples; weights are reset to
/// `1 / J`.
pub fn resample_multinomial<R: Rng + ?Sized>(system: &mut ParticleSystem, rng: &mut R) -> Result<()> {
    let index = WeightedIndex::new(system.particles.iter().map(|p| p.weight))
        .map_err(|e| Error::Domain(format!("cannot resample: {e}")))?;
    let uniform = 1.0 / system.len() as f64;
    let next: Vec<Particle> = (0..system.len())
        .map(|_| Particle {
            weight: uniform,
            ..system.particles[index.sample(rng)]
        })
        .collect();
    system.particles = next;
    system.resample_count += 1;
    Ok(())
}

/// Estimates produced by one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEstimate {
    pub g1: f64,
    pub g2: f64,
    /// `G1 / G2`, computed in log space so it survives underflow of `G2`.
    pub ratio: f64,
    pub log_g2: f64,
    /// Effective sample size after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

impl ParticleSystem {
    /// Propagates, forms the step-`t` estimator pair, reweights by
    /// `p(y | S_t)` and normalises. The system is then resampled when the
    /// effective sample size is at most `ess_fraction · J`.
    pub fn filter_step<R: Rng + ?Sized>(
        &mut self,
        model: &RandomWalkHmm,
        y: f64,
        theta: f64,
        mode: TangentMode,
        ess_fraction: f64,
        rng: &mut R,
    ) -> Result<StepEstimate> {
        let centre = self.cumulant_mean();
        let mut log_w = propagate(self, model, y, theta, mode, rng)?;
        for (lw, p) in log_w.iter_mut().zip(&self.particles) {
            *lw += p.weight.ln();
        }
        let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonFinite {
                context: "particle weights",
                block: None,
            });
        }
        let mut scaled_sum = 0.0;
        let mut scaled_num = 0.0;
        for (lw, p) in log_w.iter_mut().zip(&self.particles) {
            *lw = (*lw - peak).exp();
            scaled_sum += *lw;
            scaled_num += *lw * (p.cumulant - centre);
        }
        let log_g2 = peak + scaled_sum.ln();
        let ratio = scaled_num / scaled_sum;
        let g2 = log_g2.exp();
        for (p, s) in self.particles.iter_mut().zip(&log_w) {
            p.weight = s / scaled_sum;
        }
        let current = ess(&self.weights())?;
        let resampled = current <= ess_fraction * self.len() as f64;
        if resampled {
            resample_multinomial(self, rng)?;
        }
        Ok(StepEstimate {
            g1: g2 * ratio,
            g2,
            ratio,
            log_g2,
            ess: current,
            resampled,
        })
    }
}

/// Output of one filter pass at fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct SmcPass {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `Σ_t log G2(t)`, the particle estimate of the log-likelihood.
    pub log_likelihood: f64,
    pub resample_count: usize,
    pub min_ess: f64,
}

/// Runs one particle filter over `y` at `theta` and returns the per-step
/// estimator pair.
pub fn smc_gradient_pass<R: Rng + ?Sized>(
    model: &RandomWalkHmm,
    y: &[f64],
    theta: f64,
    particles: usize,
    ess_fraction: f64,
    mode: TangentMode,
    rng: &mut R,
) -> Result<SmcPass> {
    if y.is_empty() || particles == 0 {
        return Err(Error::config("need at least one observation and one particle"));
    }
    if !(ess_fraction > 0.0 && ess_fraction <= 1.0) {
        return Err(Error::config(format!("ess fraction must lie in (0, 1], got {ess_fraction}")));
    }
    let mut system = ParticleSystem::new(particles, model.initial_state);
    let mut pass = SmcPass {
        g1: Vec::with_capacity(y.len()),
        g2: Vec::with_capacity(y.len()),
        ratios: Vec::with_capacity(y.len()),
        log_likelihood: 0.0,
        resample_count: 0,
        min_ess: particles as f64,
    };
    for &obs in y {
        let step = system.filter_step(model, obs, theta, mode, ess_fraction, rng)?;
        pass.g1.push(step.g1);
        pass.g2.push(step.g2);
        pass.ratios.push(step.ratio);
        pass.log_likelihood += step.log_g2;
        pass.min_ess = pass.min_ess.min(step.ess);
    }
    pass.resample_count = system.resample_count;
    Ok(pass)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmConfig {
    pub theta0: f64,
    pub region: BoxRegion,
    pub fast: StepSchedule,
    pub slow: StepSchedule,
    /// Particles `J`.
    pub particles: usize,
    pub iterations: usize,
    pub ess_fraction: f64,
    pub tangent_mode: TangentMode,
    /// `ConditionalMc` runs the particle filter; `Oracle` substitutes the
    /// exact Kalman-filter pair.
    pub estimator: EstimatorMode,
    pub tracker_init: TrackerInit,
    pub seed: u64,
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.region.dim() != 1 {
            return Err(Error::Shape {
                context: "parameter box",
                expected: 1,
                found: self.region.dim(),
            });
        }
        if !self.region.contains(&[self.theta0]) {
            return Err(Error::config(format!(
                "initial value {} lies outside the feasible box",
                self.theta0
            )));
        }
        if !self.fast.separates_from(&self.slow) {
            return Err(Error::config(
                "fast step exponent must be strictly smaller than the slow one",
            ));
        }
        if self.particles == 0 {
            return Err(Error::config("particle count must be positive"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::config("ess fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn estimator_pair(
    model: &RandomWalkHmm,
    y: &[f64],
    theta: f64,
    cfg: &HmmConfig,
    rng: &mut ChaCha8Rng,
    trace: &mut RunTrace,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match cfg.estimator {
        EstimatorMode::Oracle => Ok(kalman_steps(model, y, theta)
            .into_iter()
            .map(|s| {
                let density = s.log_density.exp();
                (density * s.score, density)
            })
            .unzip()),
        EstimatorMode::ConditionalMc => {
            let pass = smc_gradient_pass(model, y, theta, cfg.particles, cfg.ess_fraction, cfg.tangent_mode, rng)?;
            trace.simulation_calls += (cfg.particles * y.len()) as u64;
            Ok((pass.g1, pass.g2))
        }
    }
}

/// Multi-time-scale MLE: one filter pass per iteration feeds the tracker,
/// whose block sum drives the projected θ step.
pub fn run_mts_hmm(model: &RandomWalkHmm, y: &[f64], cfg: &HmmConfig) -> Result<RunTrace> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::config("at least one observation is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(vec![cfg.theta0], cfg.iterations);
    let mut tracker = GradientTracker::zeros(y.len(), 1);
    let mut theta = vec![cfg.theta0];

    for k in 1..=cfg.iterations as u64 {
        let (g1, g2) = estimator_pair(model, y, theta[0], cfg, &mut rng, &mut trace)?;
        if k == 1 && cfg.tracker_init == TrackerInit::FirstRatio {
            trace.guard_events += tracker.set_ratio(&g1, &g2)?;
        }
        let grad = tracker.reduce();
        tracker.update(&g1, &g2, cfg.fast.step(k)?)?;
        theta[0] += cfg.slow.step(k)? * grad[0];
        cfg.region.project_in_place(&mut theta)?;
        trace.tracker_norms.push(euclidean_norm(&grad));
        trace.thetas.push(theta.clone());
    }
    Ok(trace.finish(started))
}

/// Single-time-scale baseline with the plug-in ratio `Σ_t G1(t) / G2(t)`.
pub fn run_sts_hmm(model: &RandomWalkHmm, y: &[f64], cfg: &HmmConfig) -> Result<RunTrace> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::config("at least one observation is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(vec![cfg.theta0], cfg.iterations);
    let mut theta = vec![cfg.theta0];

    for k in 1..=cfg.iterations as u64 {
        let (g1, g2) = estimator_pair(model, y, theta[0], cfg, &mut rng, &mut trace)?;
        let grad: f64 = g1
            .iter()
            .zip(&g2)
            .map(|(n, d)| guarded_ratio(*n, *d, &mut trace.guard_events))
            .sum();
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                context: "single-time-scale gradient",
                block: None,
            });
        }
        theta[0] += cfg.slow.step(k)? * grad;
        cfg.region.project_in_place(&mut theta)?;
        trace.tracker_norms.push(grad.abs());
        trace.thetas.push(theta.clone());
    }
    Ok(trace.finish(started))
}

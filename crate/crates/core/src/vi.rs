//! Posterior density estimation by variational inference with a simulated
//! likelihood.
//!
//! The variational family is `N(μ, σ²)` parameterised by `λ = (μ, σ²)` and
//! reparameterised as `θ = μ + σ u` with `u ~ N(0, 1)`. The ELBO gradient is
//!
//! ```text
//! ∇λ L = E_u[ ∇λ θ(u; λ) · (∇θ log p(y|θ) + ∇θ log p(θ) - ∇θ log q_λ(θ)) ]
//! ```
//!
//! and is approximated with `M` outer draws `u_m` fixed for the whole run.
//! Only the likelihood score is intractable. The nested multi-time-scale
//! scheme gives each outer draw its own [`GradientTracker`] for that score;
//! the single-time-scale baseline plugs in the ratio of inner estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mle::BatchEstimator;
use crate::models::{EstimatorMode, EstimatorModel};
use crate::sa::{euclidean_norm, BoxRegion, GradientTracker, StepSchedule, TrackerInit};
use crate::trace::{guarded_ratio, RunTrace};

/// `q_λ = N(μ, σ²)` with `λ = (μ, σ²)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianVariationalFamily;

impl GaussianVariationalFamily {
    /// `θ = μ + σ u` and its Jacobian `(∂θ/∂μ, ∂θ/∂σ²) = (1, u / (2σ))`.
    pub fn reparam_theta(&self, lambda: &[f64], u: f64) -> Result<(f64, [f64; 2])> {
        let (mu, var) = split_lambda(lambda)?;
        if var.is_nan() || var <= 0.0 {
            return Err(Error::Domain(format!("variance must be positive, got {var}")));
        }
        let sd = var.sqrt();
        Ok((mu + sd * u, [1.0, u / (2.0 * sd)]))
    }

    /// `∇θ log q_λ(θ) = -(θ - μ) / σ²`.
    pub fn score(&self, lambda: &[f64], theta: f64) -> f64 {
        -(theta - lambda[0]) / lambda[1]
    }
}

fn split_lambda(lambda: &[f64]) -> Result<(f64, f64)> {
    match lambda {
        [mu, var] => Ok((*mu, *var)),
        _ => Err(Error::Shape {
            context: "variational parameter",
            expected: 2,
            found: lambda.len(),
        }),
    }
}

/// Score of the standard normal prior.
pub fn standard_normal_prior_score(theta: f64) -> f64 {
    -theta
}

/// One outer draw and the tracker following `∇θ log p(y | θ(u; λ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterBlock {
    pub u: f64,
    pub tracker: GradientTracker,
}

/// Outer-sample average of the reparameterised ELBO gradient, using each
/// block's tracked likelihood score.
pub fn elbo_gradient(
    family: &GaussianVariationalFamily,
    blocks: &[OuterBlock],
    lambda: &[f64],
    prior_score: impl Fn(f64) -> f64,
) -> Result<[f64; 2]> {
    let draws: Vec<(f64, f64)> = blocks.iter().map(|b| (b.u, b.tracker.reduce()[0])).collect();
    gradient_from_scores(family, &draws, lambda, &prior_score)
}

/// Same average with the likelihood score supplied per outer draw as
/// `(u_m, score_m)`.
pub fn gradient_from_scores(
    family: &GaussianVariationalFamily,
    draws: &[(f64, f64)],
    lambda: &[f64],
    prior_score: &dyn Fn(f64) -> f64,
) -> Result<[f64; 2]> {
    if draws.is_empty() {
        return Err(Error::config("at least one outer sample is required"));
    }
    let mut grad = [0.0; 2];
    for &(u, lik_score) in draws {
        let (theta, jac) = family.reparam_theta(lambda, u)?;
        let total = lik_score + prior_score(theta) - family.score(lambda, theta);
        grad[0] += jac[0] * total;
        grad[1] += jac[1] * total;
    }
    let m = draws.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "ELBO gradient",
            block: None,
        });
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub lambda0: [f64; 2],
    /// Feasible region for `(μ, σ²)`; the variance bound must be positive.
    pub region: BoxRegion,
    pub fast: StepSchedule,
    pub slow: StepSchedule,
    /// Outer samples `M`.
    pub outer: usize,
    /// Inner samples `N` per outer sample and iteration.
    pub inner: usize,
    pub iterations: usize,
    pub estimator: EstimatorMode,
    pub tracker_init: TrackerInit,
    pub seed: u64,
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.region.dim() != 2 {
            return Err(Error::Shape {
                context: "variational box",
                expected: 2,
                found: self.region.dim(),
            });
        }
        if self.region.lower()[1] <= 0.0 {
            return Err(Error::config("variance lower bound must be positive"));
        }
        if !self.region.contains(&self.lambda0) {
            return Err(Error::config(format!(
                "initial value {:?} lies outside the feasible box",
                self.lambda0
            )));
        }
        if !self.fast.separates_from(&self.slow) {
            return Err(Error::config(
                "fast step exponent must be strictly smaller than the slow one",
            ));
        }
        if self.outer == 0 || self.inner == 0 {
            return Err(Error::config("outer and inner sample sizes must be positive"));
        }
        Ok(())
    }
}

fn check_inputs<M: EstimatorModel>(model: &M, y: &[f64], cfg: &PdeConfig) -> Result<()> {
    cfg.validate()?;
    if model.dim() != 1 {
        return Err(Error::Shape {
            context: "model parameter",
            expected: 1,
            found: model.dim(),
        });
    }
    if y.is_empty() {
        return Err(Error::config("at least one observation is required"));
    }
    Ok(())
}

fn draw_outer(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Nested multi-time-scale posterior estimation. The trace holds
/// `λ_0 ..= λ_K`.
pub fn run_nested_mts_pde<M: EstimatorModel>(
    model: &M,
    y: &[f64],
    prior_score: impl Fn(f64) -> f64,
    cfg: &PdeConfig,
) -> Result<RunTrace> {
    check_inputs(model, y, cfg)?;
    let family = GaussianVariationalFamily;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(cfg.lambda0.to_vec(), cfg.iterations);
    let mut blocks: Vec<OuterBlock> = draw_outer(&mut rng, cfg.outer)
        .into_iter()
        .map(|u| OuterBlock {
            u,
            tracker: GradientTracker::zeros(y.len(), 1),
        })
        .collect();
    let mut estimator = BatchEstimator::new(model, cfg.inner);
    let mut g1 = vec![0.0; y.len()];
    let mut g2 = vec![0.0; y.len()];
    let mut lambda = cfg.lambda0.to_vec();

    let mut batches = vec![(Vec::new(), Vec::new()); cfg.outer];
    for k in 1..=cfg.iterations as u64 {
        for (block, (b1, b2)) in blocks.iter().zip(batches.iter_mut()) {
            let (theta, _) = family.reparam_theta(&lambda, block.u)?;
            trace.simulation_calls +=
                estimator.estimate(cfg.estimator, cfg.inner, y, &[theta], &mut rng, &mut g1, &mut g2);
            b1.clone_from(&g1);
            b2.clone_from(&g2);
        }
        if k == 1 && cfg.tracker_init == TrackerInit::FirstRatio {
            for (block, (b1, b2)) in blocks.iter_mut().zip(&batches) {
                trace.guard_events += block.tracker.set_ratio(b1, b2)?;
            }
        }
        let grad = elbo_gradient(&family, &blocks, &lambda, &prior_score)?;
        let alpha = cfg.fast.step(k)?;
        for (block, (b1, b2)) in blocks.iter_mut().zip(&batches) {
            block.tracker.update(b1, b2, alpha)?;
        }
        let beta = cfg.slow.step(k)?;
        lambda[0] += beta * grad[0];
        lambda[1] += beta * grad[1];
        cfg.region.project_in_place(&mut lambda)?;
        trace.tracker_norms.push(euclidean_norm(&grad));
        trace.thetas.push(lambda.clone());
    }
    Ok(trace.finish(started))
}

/// Single-time-scale baseline: each outer draw uses the guarded plug-in
/// ratio `Σ_t G1(t) / G2(t)` of its inner batch.
pub fn run_sts_pde<M: EstimatorModel>(
    model: &M,
    y: &[f64],
    prior_score: impl Fn(f64) -> f64,
    cfg: &PdeConfig,
) -> Result<RunTrace> {
    check_inputs(model, y, cfg)?;
    let family = GaussianVariationalFamily;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut trace, started) = RunTrace::start(cfg.lambda0.to_vec(), cfg.iterations);
    let us = draw_outer(&mut rng, cfg.outer);
    let mut estimator = BatchEstimator::new(model, cfg.inner);
    let mut g1 = vec![0.0; y.len()];
    let mut g2 = vec![0.0; y.len()];
    let mut lambda = cfg.lambda0.to_vec();
    let mut draws = Vec::with_capacity(cfg.outer);

    for k in 1..=cfg.iterations as u64 {
        draws.clear();
        for &u in &us {
            let (theta, _) = family.reparam_theta(&lambda, u)?;
            trace.simulation_calls +=
                estimator.estimate(cfg.estimator, cfg.inner, y, &[theta], &mut rng, &mut g1, &mut g2);
            let score: f64 = g1
                .iter()
                .zip(&g2)
                .map(|(n, d)| guarded_ratio(*n, *d, &mut trace.guard_events))
                .sum();
            draws.push((u, score));
        }
        let grad = gradient_from_scores(&family, &draws, &lambda, &prior_score)?;
        let beta = cfg.slow.step(k)?;
        lambda[0] += beta * grad[0];
        lambda[1] += beta * grad[1];
        cfg.region.project_in_place(&mut lambda)?;
        trace.tracker_norms.push(euclidean_norm(&grad));
        trace.thetas.push(lambda.clone());
    }
    Ok(trace.finish(started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{analytic_posterior, LocationModel};
    use approx::assert_relative_eq;

    #[test]
    fn reparam_examples() {
        let f = GaussianVariationalFamily;
        assert_eq!(f.reparam_theta(&[0.0, 1.0], 0.0).unwrap(), (0.0, [1.0, 0.0]));
        assert_eq!(f.reparam_theta(&[0.0, 1.0], 0.5).unwrap(), (0.5, [1.0, 0.25]));
        assert_eq!(f.reparam_theta(&[2.0, 4.0], 1.0).unwrap(), (4.0, [1.0, 0.25]));
        assert!(matches!(f.reparam_theta(&[0.0, 0.0], 1.0), Err(Error::Domain(_))));
        assert!(f.reparam_theta(&[0.0], 1.0).is_err());
    }

    #[test]
    fn gradient_with_centre_draws() {
        let f = GaussianVariationalFamily;
        let blocks = vec![
            OuterBlock {
                u: 0.0,
                tracker: GradientTracker::zeros(3, 1),
            };
            4
        ];
        let g = elbo_gradient(&f, &blocks, &[1.7, 0.3], standard_normal_prior_score).unwrap();
        assert_relative_eq!(g[0], -1.7);
        assert_eq!(g[1], 0.0);
        let zero = gradient_from_scores(&f, &[(0.0, 0.0)], &[0.0, 1.0], &|_| 0.0).unwrap();
        assert_eq!(zero, [0.0, 0.0]);
    }

    #[test]
    fn gradient_vanishes_at_the_exact_posterior() {
        // With the exact score Σ(y_t - θ) the SAA gradient is zero at the
        // analytic posterior for any set of outer draws.
        let y = [0.4, 1.9, -0.3, 1.2, 0.8];
        let (mean, var) = analytic_posterior(&y).unwrap();
        let lambda = [mean, var];
        let f = GaussianVariationalFamily;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws: Vec<(f64, f64)> = draw_outer(&mut rng, 5000)
            .into_iter()
            .map(|u| {
                let (th, _) = f.reparam_theta(&lambda, u).unwrap();
                (u, y.iter().map(|v| v - th).sum())
            })
            .collect();
        let g = gradient_from_scores(&f, &draws, &lambda, &standard_normal_prior_score).unwrap();
        assert!(g[0].abs() < 1e-9 && g[1].abs() < 1e-9, "{g:?}");
    }

    fn config(estimator: EstimatorMode, outer: usize, inner: usize, iterations: usize) -> PdeConfig {
        PdeConfig {
            lambda0: [0.0, 1.0],
            region: BoxRegion::new(vec![-1.0, 0.01], vec![10.0, 2.0]).unwrap(),
            fast: StepSchedule::new(10.0, 0.55).unwrap(),
            slow: StepSchedule::new(1.0, 1.0).unwrap(),
            outer,
            inner,
            iterations,
            estimator,
            tracker_init: TrackerInit::Zero,
            seed: 17,
        }
    }

    #[test]
    fn zero_iterations_return_initial_value() {
        let cfg = config(EstimatorMode::ConditionalMc, 3, 5, 0);
        let trace = run_nested_mts_pde(&LocationModel::default(), &[1.0; 10], standard_normal_prior_score, &cfg)
            .unwrap();
        assert_eq!(trace.final_estimate(), &[0.0, 1.0]);
    }

    #[test]
    fn oracle_runs_reach_posterior() {
        let y = [1.0; 10];
        let cfg = config(EstimatorMode::Oracle, 10, 1, 10_000);
        let model = LocationModel::default();
        let mts = run_nested_mts_pde(&model, &y, standard_normal_prior_score, &cfg).unwrap();
        let sts = run_sts_pde(&model, &y, standard_normal_prior_score, &cfg).unwrap();
        for trace in [&mts, &sts] {
            let l = trace.final_estimate();
            assert!((l[0] - 10.0 / 11.0).abs() < 1e-2, "{l:?}");
            assert!((l[1] - 1.0 / 11.0).abs() < 1e-2, "{l:?}");
        }
    }

    #[test]
    fn iterates_stay_in_box_and_budget_is_counted() {
        let cfg = config(EstimatorMode::ConditionalMc, 4, 30, 60);
        let y = [1.3, -0.2, 0.5];
        let model = LocationModel::default();
        for trace in [
            run_nested_mts_pde(&model, &y, standard_normal_prior_score, &cfg).unwrap(),
            run_sts_pde(&model, &y, standard_normal_prior_score, &cfg).unwrap(),
        ] {
            assert!(trace.thetas.iter().all(|l| cfg.region.contains(l)));
            assert_eq!(trace.simulation_calls, 4 * 30 * 60);
        }
    }

    #[test]
    fn invalid_configurations() {
        let mut cfg = config(EstimatorMode::Oracle, 1, 1, 1);
        cfg.lambda0 = [0.0, 3.0];
        assert!(cfg.validate().is_err());
        let mut cfg = config(EstimatorMode::Oracle, 0, 1, 1);
        assert!(cfg.validate().is_err());
        cfg.outer = 1;
        cfg.region = BoxRegion::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(cfg.validate().is_err());
    }
}

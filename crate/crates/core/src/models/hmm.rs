use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use super::std_normal_pdf;

/// Gaussian random walk with drift observed in unit noise:
/// `S_t = S_{t-1} + θ + V_t`, `Y_t = S_t + W_t`, `V, W ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomWalkHmm {
    pub initial_state: f64,
}

impl Default for RandomWalkHmm {
    fn default() -> Self {
        RandomWalkHmm { initial_state: 0.0 }
    }
}

/// A simulated trajectory; the hidden path is kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmPath {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
}

/// Observation density, its partial derivatives, and the transition
/// derivatives at one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmKernels {
    /// `p(y | s, θ)`
    pub phi1: f64,
    /// `∂p(y | s, θ) / ∂θ`
    pub phi2: f64,
    /// `∂p(y | s, θ) / ∂s`
    pub phi3: f64,
    /// `∂h / ∂θ`
    pub phi4: f64,
    /// `∂h / ∂s`
    pub dh_ds: f64,
}

impl RandomWalkHmm {
    pub fn transition(&self, state: f64, theta: f64, noise: f64) -> f64 {
        state + theta + noise
    }

    /// Draws a path of length `count`.
    pub fn simulate<R: Rng + ?Sized>(&self, theta: f64, count: usize, rng: &mut R) -> HmmPath {
        let mut v = Vec::with_capacity(count);
        let mut w = Vec::with_capacity(count);
        for _ in 0..count {
            v.push(rng.sample(StandardNormal));
            w.push(rng.sample(StandardNormal));
        }
        self.simulate_from_noise(theta, &v, &w)
    }

    /// Builds a path from explicit transition and observation noise. Passing
    /// zeros gives the deterministic skeleton `S_t = S_0 + tθ`.
    pub fn simulate_from_noise(&self, theta: f64, transition_noise: &[f64], observation_noise: &[f64]) -> HmmPath {
        let mut state = self.initial_state;
        let mut states = Vec::with_capacity(transition_noise.len());
        let mut observations = Vec::with_capacity(transition_noise.len());
        for (v, w) in transition_noise.iter().zip(observation_noise) {
            state = self.transition(state, theta, *v);
            states.push(state);
            observations.push(state + w);
        }
        HmmPath {
            states,
            observations,
        }
    }

    pub fn kernels(&self, y: f64, state: f64, _theta: f64) -> HmmKernels {
        let phi1 = std_normal_pdf(y - state);
        HmmKernels {
            phi1,
            phi2: 0.0,
            phi3: (y - state) * phi1,
            phi4: 1.0,
            dh_ds: 1.0,
        }
    }

    /// `log p(y | s, θ)`, finite even where `phi1` underflows.
    pub fn log_observation_density(&self, y: f64, state: f64, _theta: f64) -> f64 {
        let r = y - state;
        -0.5 * r * r - 0.5 * (2.0 * PI).ln()
    }

    /// Score ratios `(phi2 / phi1, phi3 / phi1)` computed without dividing.
    pub fn observation_scores(&self, y: f64, state: f64, _theta: f64) -> (f64, f64) {
        (0.0, y - state)
    }
}

/// One step of the Kalman filter for [`RandomWalkHmm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanStep {
    /// `log p(y_t | y_{1:t-1}; θ)`
    pub log_density: f64,
    /// `∂/∂θ` of `log_density`.
    pub score: f64,
    pub predicted_mean: f64,
    pub predicted_variance: f64,
}

/// Exact predictive densities and their θ-derivatives, step by step.
///
/// The gain does not depend on θ, so the derivative of the predicted mean
/// follows the same recursion as the mean with the drift replaced by 1.
pub fn kalman_steps(model: &RandomWalkHmm, y: &[f64], theta: f64) -> Vec<KalmanStep> {
    let mut mean = model.initial_state;
    let mut var = 0.0;
    let mut d_mean = 0.0;
    y.iter()
        .map(|&obs| {
            let pred_mean = mean + theta;
            let pred_var = var + 1.0;
            let d_pred = d_mean + 1.0;
            let innov_var = pred_var + 1.0;
            let innov = obs - pred_mean;
            let gain = pred_var / innov_var;
            mean = pred_mean + gain * innov;
            var = (1.0 - gain) * pred_var;
            d_mean = d_pred * (1.0 - gain);
            KalmanStep {
                log_density: -0.5 * ((2.0 * PI * innov_var).ln() + innov * innov / innov_var),
                score: innov * d_pred / innov_var,
                predicted_mean: pred_mean,
                predicted_variance: innov_var,
            }
        })
        .collect()
}

/// Exact log-likelihood and its θ-derivative.
pub fn kalman_loglik_and_grad(model: &RandomWalkHmm, y: &[f64], theta: f64) -> (f64, f64) {
    kalman_steps(model, y, theta)
        .iter()
        .fold((0.0, 0.0), |(l, g), s| (l + s.log_density, g + s.score))
}

/// Exact MLE. The log-likelihood is quadratic in θ, so one Newton step from
/// any point lands on the maximiser.
pub fn kalman_mle(model: &RandomWalkHmm, y: &[f64]) -> f64 {
    let (_, grad) = kalman_loglik_and_grad(model, y, 0.0);
    // Curvature: -Σ (∂ predicted mean / ∂θ)² / innovation variance.
    let mut var = 0.0;
    let mut d_mean = 0.0;
    let mut info = 0.0;
    for _ in y {
        let pred_var = var + 1.0;
        let d_pred = d_mean + 1.0;
        let innov_var = pred_var + 1.0;
        let gain = pred_var / innov_var;
        info += d_pred * d_pred / innov_var;
        var = (1.0 - gain) * pred_var;
        d_mean = d_pred * (1.0 - gain);
    }
    grad / info
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn noise_free_skeleton() {
        let path = RandomWalkHmm::default().simulate_from_noise(1.0, &[0.0; 5], &[0.0; 5]);
        assert_eq!(path.states, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(path.observations, path.states);
    }

    #[test]
    fn kernel_examples() {
        let m = RandomWalkHmm::default();
        let k = m.kernels(0.3, 0.3, 1.0);
        assert_relative_eq!(k.phi1, 0.3989422804014327, epsilon = 1e-15);
        assert_eq!(k.phi3, 0.0);
        assert_eq!((k.phi2, k.phi4), (0.0, 1.0));
        let k = m.kernels(1.0, 0.0, -4.0);
        assert_relative_eq!(k.phi3, 0.24197072451914337, epsilon = 1e-15);
        assert_eq!((k.phi2, k.phi4), (0.0, 1.0));
    }

    #[test]
    fn phi3_is_the_state_derivative_of_phi1() {
        let m = RandomWalkHmm::default();
        for &(y, s) in &[(0.0, 0.5), (2.0, -1.0), (-0.7, 0.2), (3.0, 0.1)] {
            let h = 1e-6;
            let fd = (m.kernels(y, s + h, 0.0).phi1 - m.kernels(y, s - h, 0.0).phi1) / (2.0 * h);
            let an = m.kernels(y, s, 0.0).phi3;
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn log_density_and_scores_agree_with_kernels() {
        let m = RandomWalkHmm::default();
        let k = m.kernels(1.2, -0.4, 0.9);
        assert_relative_eq!(m.log_observation_density(1.2, -0.4, 0.9).exp(), k.phi1, epsilon = 1e-15);
        let (s_theta, s_state) = m.observation_scores(1.2, -0.4, 0.9);
        assert_relative_eq!(s_state, k.phi3 / k.phi1, epsilon = 1e-14);
        assert_eq!(s_theta, k.phi2 / k.phi1);
    }

    #[test]
    fn one_step_predictive() {
        let m = RandomWalkHmm::default();
        let (ll, grad) = kalman_loglik_and_grad(&m, &[0.7], 0.7);
        assert_relative_eq!(ll, (1.0 / (4.0 * PI).sqrt()).ln(), epsilon = 1e-14);
        assert_eq!(grad, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = RandomWalkHmm::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (theta_true, theta) in [(1.0, 0.6), (0.2, 1.5), (-1.0, -0.4)] {
            let y = m.simulate(theta_true, 40, &mut rng).observations;
            let h = 1e-6;
            let fd = (kalman_loglik_and_grad(&m, &y, theta + h).0
                - kalman_loglik_and_grad(&m, &y, theta - h).0)
                / (2.0 * h);
            let (_, an) = kalman_loglik_and_grad(&m, &y, theta);
            assert!((fd - an).abs() <= 1e-5 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn mle_is_a_stationary_point() {
        let m = RandomWalkHmm::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let y = m.simulate(1.0, 100, &mut rng).observations;
        let mle = kalman_mle(&m, &y);
        assert!(kalman_loglik_and_grad(&m, &y, mle).1.abs() < 1e-9);
    }
}

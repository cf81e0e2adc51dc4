use rand::Rng;
use rand_distr::StandardNormal;

use super::{normal_pdf, std_normal_pdf, EstimatorModel};

/// `Y = X1 + θ·X2` with independent standard normal `X1`, `X2`.
///
/// The estimator conditions on `X2 = x`, leaving `Y | x ~ N(θx, 1)`:
/// `g2 = φ(y - θx)` and `g1 = x (y - θx) φ(y - θx)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearScaleModel;

impl LinearScaleModel {
    /// Marginal density `N(0, 1 + θ²)` at `y`.
    pub fn marginal_density(y: f64, theta: f64) -> f64 {
        normal_pdf(y, 1.0 + theta * theta)
    }

    /// `∂/∂θ` of [`LinearScaleModel::marginal_density`].
    pub fn marginal_density_gradient(y: f64, theta: f64) -> f64 {
        let v = 1.0 + theta * theta;
        Self::marginal_density(y, theta) * theta * (y * y / (v * v) - 1.0 / v)
    }
}

impl EstimatorModel for LinearScaleModel {
    type Latent = f64;

    fn dim(&self) -> usize {
        1
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], count: usize, rng: &mut R) -> Vec<f64> {
        (0..count)
            .map(|_| {
                let x1: f64 = rng.sample(StandardNormal);
                let x2: f64 = rng.sample(StandardNormal);
                x1 + theta[0] * x2
            })
            .collect()
    }

    fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn pair_from_latent(&self, x2: f64, y: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
        let resid = y - theta[0] * x2;
        let density = std_normal_pdf(resid);
        grad[0] = x2 * resid * density;
        density
    }

    fn exact_pair(&self, y: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = Self::marginal_density_gradient(y, theta[0]);
        Self::marginal_density(y, theta[0])
    }
}

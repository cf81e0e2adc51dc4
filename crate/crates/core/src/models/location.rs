use rand::Rng;
use rand_distr::StandardNormal;

use super::{normal_pdf, EstimatorModel};
use crate::error::{Error, Result};

/// `Y = X + θ` with `X ~ N(0, 1)`.
///
/// `Y` carries no noise beyond `X`, so the estimator splits
/// `X = Xa + Xb` with `Xa ~ N(0, ρ)`, `Xb ~ N(0, 1-ρ)` and conditions on `Xa`:
/// `g2 = φ_{1-ρ}(r)`, `g1 = r / (1-ρ) · φ_{1-ρ}(r)` with `r = y - θ - xa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationModel {
    split_fraction: f64,
}

impl Default for LocationModel {
    fn default() -> Self {
        LocationModel { split_fraction: 0.5 }
    }
}

impl LocationModel {
    pub fn new(split_fraction: f64) -> Result<Self> {
        if !(split_fraction > 0.0 && split_fraction < 1.0) {
            return Err(Error::config(format!(
                "split fraction must lie in (0, 1), got {split_fraction}"
            )));
        }
        Ok(LocationModel { split_fraction })
    }

    pub fn split_fraction(&self) -> f64 {
        self.split_fraction
    }
}

impl EstimatorModel for LocationModel {
    type Latent = f64;

    fn dim(&self) -> usize {
        1
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], count: usize, rng: &mut R) -> Vec<f64> {
        (0..count)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + theta[0])
            .collect()
    }

    fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.split_fraction.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn pair_from_latent(&self, xa: f64, y: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
        let rest = 1.0 - self.split_fraction;
        let resid = y - theta[0] - xa;
        let density = normal_pdf(resid, rest);
        grad[0] = resid / rest * density;
        density
    }

    fn exact_pair(&self, y: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
        let resid = y - theta[0];
        let density = normal_pdf(resid, 1.0);
        grad[0] = resid * density;
        density
    }
}

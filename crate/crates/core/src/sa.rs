//! Two-time-scale stochastic approximation primitives.
//!
//! A multi-time-scale run couples two iterations. The fast one keeps a
//! [`GradientTracker`] that follows the per-observation score
//! `∇p(y_t; θ) / p(y_t; θ)` without ever dividing one noisy estimate by
//! another: each block `D[t]` is pulled toward the root of
//! `g1[t] - g2[t] · D[t] = 0`. The slow iteration moves the parameter along
//! the sum of the blocks and projects the result back onto a [`BoxRegion`].
//!
//! The two step sequences are [`StepSchedule`]s of the form `a / k^e`. Time
//! scale separation requires the slow step to vanish faster than the fast
//! one, which for power laws means a strictly larger exponent on the slow
//! schedule.

use crate::error::{Error, Result};

/// Power-law step sequence `scale / (k + offset)^exponent`, indexed from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    scale: f64,
    exponent: f64,
    offset: u64,
}

impl StepSchedule {
    /// Builds a schedule. The exponent must lie in `(0.5, 1]` so that the
    /// steps are not summable but square summable.
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config(format!("step scale must be positive, got {scale}")));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::config(format!(
                "step exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(StepSchedule {
            scale,
            exponent,
            offset: 0,
        })
    }

    /// Shifts the index: `step(k)` becomes `scale / (k + offset)^exponent`.
    pub fn with_offset(mut self, offset: u64) -> Self {
        self.offset = offset;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Step size at iteration `k >= 1`.
    pub fn step(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::Index(k));
        }
        Ok(self.scale / ((k + self.offset) as f64).powf(self.exponent))
    }

    /// Whether `self` (fast) and `slow` satisfy `slow(k) / fast(k) -> 0`.
    pub fn separates_from(&self, slow: &StepSchedule) -> bool {
        self.exponent < slow.exponent
    }
}

/// Closed axis-aligned box used as the feasible region of an iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape {
                context: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::config("box must have at least one dimension"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "box coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    /// One-dimensional interval `[lower, upper]`.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut out = point.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, point: &mut [f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::Shape {
                context: "projection",
                expected: self.dim(),
                found: point.len(),
            });
        }
        for (x, (lo, hi)) in point.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            if x.is_nan() {
                return Err(Error::NonFinite {
                    context: "projection",
                    block: None,
                });
            }
            *x = x.clamp(*lo, *hi);
        }
        Ok(())
    }
}

/// Starting value of a [`GradientTracker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackerInit {
    /// `D_0 = 0`.
    Zero,
    /// `D_0 = G1 / G2` from the first batch, so the first fast step is a
    /// no-op and no memory of an arbitrary start has to be forgotten.
    #[default]
    FirstRatio,
}

impl TrackerInit {
    pub fn name(&self) -> &'static str {
        match self {
            TrackerInit::Zero => "zero",
            TrackerInit::FirstRatio => "first_ratio",
        }
    }
}

impl std::str::FromStr for TrackerInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(TrackerInit::Zero),
            "first_ratio" => Ok(TrackerInit::FirstRatio),
            other => Err(Error::config(format!("unknown tracker init `{other}`"))),
        }
    }
}

/// The fast iterate: `T` blocks of `d`-dimensional score estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTracker {
    values: Vec<f64>,
    t_count: usize,
    dim: usize,
}

impl GradientTracker {
    pub fn zeros(t_count: usize, dim: usize) -> Self {
        GradientTracker {
            values: vec![0.0; t_count * dim],
            t_count,
            dim,
        }
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let dim = blocks.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(blocks.len() * dim);
        for block in blocks {
            if block.len() != dim {
                return Err(Error::Shape {
                    context: "tracker block",
                    expected: dim,
                    found: block.len(),
                });
            }
            values.extend_from_slice(block);
        }
        Ok(GradientTracker {
            values,
            t_count: blocks.len(),
            dim,
        })
    }

    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1)).take(self.t_count)
    }

    /// The flattened `T * d` vector.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// One fast step, `D[t] += alpha * (g1[t] - g2[t] * D[t])` for every block.
    ///
    /// `g1` is the flattened `T * d` numerator estimate and `g2` holds one
    /// scalar per block. On error the tracker is left unchanged.
    pub fn update(&mut self, g1: &[f64], g2: &[f64], alpha: f64) -> Result<()> {
        if g1.len() != self.values.len() {
            return Err(Error::Shape {
                context: "tracker numerator",
                expected: self.values.len(),
                found: g1.len(),
            });
        }
        if g2.len() != self.t_count {
            return Err(Error::Shape {
                context: "tracker denominator",
                expected: self.t_count,
                found: g2.len(),
            });
        }
        if !alpha.is_finite() {
            return Err(Error::NonFinite {
                context: "tracker step size",
                block: None,
            });
        }
        let d = self.dim;
        for t in 0..self.t_count {
            let block = &self.values[t * d..(t + 1) * d];
            let num = &g1[t * d..(t + 1) * d];
            let ok = g2[t].is_finite()
                && num
                    .iter()
                    .zip(block)
                    .all(|(n, v)| (v + alpha * (n - g2[t] * v)).is_finite());
            if !ok {
                return Err(Error::NonFinite {
                    context: "tracker update",
                    block: Some(t),
                });
            }
        }
        for (t, den) in g2.iter().enumerate() {
            for (v, n) in self.values[t * d..(t + 1) * d]
                .iter_mut()
                .zip(&g1[t * d..(t + 1) * d])
            {
                *v += alpha * (n - den * *v);
            }
        }
        Ok(())
    }

    /// Overwrites every block with the guarded plug-in ratio `g1[t] / g2[t]`.
    /// Returns the number of guarded denominators.
    pub fn set_ratio(&mut self, g1: &[f64], g2: &[f64]) -> Result<u64> {
        if g1.len() != self.values.len() || g2.len() != self.t_count {
            return Err(Error::Shape {
                context: "tracker ratio",
                expected: self.values.len(),
                found: g1.len(),
            });
        }
        let mut events = 0;
        let d = self.dim;
        for (t, den) in g2.iter().enumerate() {
            for (v, n) in self.values[t * d..(t + 1) * d].iter_mut().zip(&g1[t * d..(t + 1) * d]) {
                *v = crate::trace::guarded_ratio(*n, *den, &mut events);
            }
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "tracker ratio",
                block: Some(pos / d.max(1)),
            });
        }
        Ok(events)
    }

    /// Non-mutating form of [`GradientTracker::update`].
    pub fn updated(&self, g1: &[f64], g2: &[f64], alpha: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(g1, g2, alpha)?;
        Ok(next)
    }

    /// Sum of the blocks, i.e. the tracked gradient of the log-likelihood.
    pub fn reduce(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for block in self.blocks() {
            for (o, v) in out.iter_mut().zip(block) {
                *o += v;
            }
        }
        out
    }
}

pub(crate) fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

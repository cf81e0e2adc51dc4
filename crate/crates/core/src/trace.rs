use std::time::Instant;

/// Record of one stochastic-approximation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Iterates `θ_0 ..= θ_K` (or `λ_0 ..= λ_K`).
    pub thetas: Vec<Vec<f64>>,
    /// Norm of the gradient used at each slow step.
    pub tracker_norms: Vec<f64>,
    /// Number of denominator clamps applied by the ratio guard.
    pub guard_events: u64,
    /// Latent draws (or particle moves) consumed by the run.
    pub simulation_calls: u64,
    pub wall_time: f64,
}

impl RunTrace {
    pub(crate) fn start(initial: Vec<f64>, iterations: usize) -> (Self, Instant) {
        let mut thetas = Vec::with_capacity(iterations + 1);
        thetas.push(initial);
        let trace = RunTrace {
            thetas,
            tracker_norms: Vec::with_capacity(iterations),
            guard_events: 0,
            simulation_calls: 0,
            wall_time: 0.0,
        };
        (trace, Instant::now())
    }

    pub(crate) fn finish(mut self, started: Instant) -> Self {
        self.wall_time = started.elapsed().as_secs_f64();
        self
    }

    /// The returned estimate, i.e. the last iterate.
    pub fn final_estimate(&self) -> &[f64] {
        self.thetas.last().expect("trace always holds the initial iterate")
    }

    pub fn iterations(&self) -> usize {
        self.thetas.len() - 1
    }
}

/// Smallest denominator magnitude accepted by single-time-scale ratios.
pub const RATIO_GUARD: f64 = 1e-8;

/// `num / den` with `|den|` clamped to at least [`RATIO_GUARD`]. Every clamp
/// increments `events`.
pub fn guarded_ratio(num: f64, den: f64, events: &mut u64) -> f64 {
    if den.abs() < RATIO_GUARD {
        *events += 1;
        num / RATIO_GUARD.copysign(if den == 0.0 { 1.0 } else { den })
    } else {
        num / den
    }
}

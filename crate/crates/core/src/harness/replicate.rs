use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Algorithm, ExperimentSpec, Problem};
use crate::error::{Error, Result};
use crate::mle::{run_mts_mle, run_sts_mle, MleConfig};
use crate::models::{analytic_mle, analytic_posterior, EstimatorModel, LinearScaleModel, LocationModel, RandomWalkHmm};
use crate::smc::{run_mts_hmm, run_sts_hmm, HmmConfig};
use crate::trace::RunTrace;
use crate::vi::{run_nested_mts_pde, run_sts_pde, standard_normal_prior_score, PdeConfig};

/// Seed of stream `index` under `master`. Streams depend only on their own
/// index, so adding replications leaves earlier ones untouched.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(master ^ mix(index))
}

/// Outcome of one replication.
#[derive(Debug)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    /// Final iterate; empty when the run failed.
    pub estimate: Vec<f64>,
    /// Target the error is measured against; empty if it could not be formed.
    pub reference: Vec<f64>,
    pub guard_events: u64,
    pub simulation_calls: u64,
    pub wall_time: f64,
    /// Kept only when the experiment asks for traces.
    pub trace: Option<RunTrace>,
    pub failure: Option<Error>,
}

impl ReplicationRecord {
    /// `|estimate - reference|` per coordinate.
    pub fn abs_errors(&self) -> Vec<f64> {
        self.errors().iter().map(|e| e.abs()).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.estimate.iter().zip(&self.reference).map(|(e, r)| e - r).collect()
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Error statistics for one coordinate over the completed replications.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateStats {
    pub label: &'static str,
    /// `|mean(estimate - reference)|`.
    pub mean_abs_bias: f64,
    /// Sample standard deviation of `estimate - reference`.
    pub std: f64,
    /// `mean(|estimate - reference|)`.
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub problem: Problem,
    pub algorithm: Algorithm,
    pub gamma: u64,
    pub outer: Option<usize>,
    /// `N` for mle and pde, `J` for hmm.
    pub batch: usize,
    pub iterations: usize,
    pub requested: usize,
    pub completed: usize,
    pub coordinates: Vec<CoordinateStats>,
    /// Guard clamps per ratio evaluation.
    pub guard_rate: f64,
    /// Present only when the experiment enables timing.
    pub mean_wall_time: Option<f64>,
}

impl ReplicationStats {
    pub fn failed(&self) -> usize {
        self.requested - self.completed
    }

    pub fn coordinate(&self, label: &str) -> Option<&CoordinateStats> {
        self.coordinates.iter().find(|c| c.label == label)
    }
}

fn simulate_data(spec: &ExperimentSpec, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = [spec.theta_star];
    Ok(match spec.problem {
        Problem::Mle => LinearScaleModel.simulate(&theta, spec.observations, &mut rng),
        Problem::Pde => LocationModel::new(spec.split_fraction)?.simulate(&theta, spec.observations, &mut rng),
        Problem::Hmm => RandomWalkHmm::default().simulate(spec.theta_star, spec.observations, &mut rng).observations,
    })
}

fn reference(spec: &ExperimentSpec, y: &[f64]) -> Result<Vec<f64>> {
    match spec.problem {
        Problem::Mle => Ok(vec![analytic_mle(y)?]),
        Problem::Pde => {
            let (m, v) = analytic_posterior(y)?;
            Ok(vec![m, v])
        }
        Problem::Hmm => Ok(vec![spec.theta_star]),
    }
}

fn run_once(spec: &ExperimentSpec, y: &[f64], seed: u64) -> Result<RunTrace> {
    let region = spec.region()?;
    let (fast, slow) = (spec.fast()?, spec.slow()?);
    match spec.problem {
        Problem::Mle => {
            let cfg = MleConfig {
                theta0: spec.initial.clone(),
                region,
                fast,
                slow,
                batch: spec.batch,
                iterations: spec.iterations,
                estimator: spec.estimator,
                tracker_init: spec.tracker_init,
                seed,
            };
            match spec.algorithm {
                Algorithm::Mts => run_mts_mle(&LinearScaleModel, y, &cfg),
                Algorithm::Sts => run_sts_mle(&LinearScaleModel, y, &cfg),
            }
        }
        Problem::Pde => {
            let model = LocationModel::new(spec.split_fraction)?;
            let cfg = PdeConfig {
                lambda0: [spec.initial[0], spec.initial[1]],
                region,
                fast,
                slow,
                outer: spec.outer.unwrap_or(0),
                inner: spec.batch,
                iterations: spec.iterations,
                estimator: spec.estimator,
                tracker_init: spec.tracker_init,
                seed,
            };
            match spec.algorithm {
                Algorithm::Mts => run_nested_mts_pde(&model, y, standard_normal_prior_score, &cfg),
                Algorithm::Sts => run_sts_pde(&model, y, standard_normal_prior_score, &cfg),
            }
        }
        Problem::Hmm => {
            let model = RandomWalkHmm::default();
            let cfg = HmmConfig {
                theta0: spec.initial[0],
                region,
                fast,
                slow,
                particles: spec.particles,
                iterations: spec.iterations,
                ess_fraction: spec.ess_fraction,
                tangent_mode: spec.tangent_mode,
                estimator: spec.estimator,
                tracker_init: spec.tracker_init,
                seed,
            };
            match spec.algorithm {
                Algorithm::Mts => run_mts_hmm(&model, y, &cfg),
                Algorithm::Sts => run_sts_hmm(&model, y, &cfg),
            }
        }
    }
}

fn replicate(spec: &ExperimentSpec, rep: usize, shared: Option<&[f64]>) -> ReplicationRecord {
    let seed = derive_seed(spec.seed, rep as u64);
    let mut record = ReplicationRecord {
        rep,
        seed,
        estimate: Vec::new(),
        reference: Vec::new(),
        guard_events: 0,
        simulation_calls: 0,
        wall_time: 0.0,
        trace: None,
        failure: None,
    };
    let fresh;
    let y = match shared {
        Some(y) => y,
        None => match simulate_data(spec, derive_seed(spec.data_seed, rep as u64)) {
            Ok(y) => {
                fresh = y;
                &fresh
            }
            Err(e) => {
                record.failure = Some(e);
                return record;
            }
        },
    };
    let outcome = reference(spec, y).and_then(|r| {
        record.reference = r;
        run_once(spec, y, seed)
    });
    match outcome {
        Ok(trace) => {
            record.estimate = trace.final_estimate().to_vec();
            record.guard_events = trace.guard_events;
            record.simulation_calls = trace.simulation_calls;
            record.wall_time = trace.wall_time;
            if spec.trace {
                record.trace = Some(trace);
            }
        }
        Err(e) => record.failure = Some(e),
    }
    record
}

fn coordinate_stats(label: &'static str, errors: &[f64]) -> CoordinateStats {
    let n = errors.len() as f64;
    if errors.is_empty() {
        return CoordinateStats {
            label,
            mean_abs_bias: f64::NAN,
            std: f64::NAN,
            mae: f64::NAN,
        };
    }
    let mean = errors.iter().sum::<f64>() / n;
    let std = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    CoordinateStats {
        label,
        mean_abs_bias: mean.abs(),
        std,
        mae: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
    }
}

fn aggregate(spec: &ExperimentSpec, records: &[ReplicationRecord]) -> ReplicationStats {
    let done: Vec<&ReplicationRecord> = records.iter().filter(|r| r.succeeded()).collect();
    let coordinates = spec
        .problem
        .coordinates()
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let errors: Vec<f64> = done.iter().map(|r| r.errors()[i]).collect();
            coordinate_stats(label, &errors)
        })
        .collect();
    let outer = if spec.problem == Problem::Pde { spec.outer } else { None };
    let ratio_evals = done.len() as f64 * (spec.iterations * spec.observations * outer.unwrap_or(1)) as f64;
    let guards: u64 = done.iter().map(|r| r.guard_events).sum();
    ReplicationStats {
        problem: spec.problem,
        algorithm: spec.algorithm,
        gamma: spec.gamma.unwrap_or_else(|| spec.draws_per_run()),
        outer,
        batch: if spec.problem == Problem::Hmm { spec.particles } else { spec.batch },
        iterations: spec.iterations,
        requested: records.len(),
        completed: done.len(),
        coordinates,
        guard_rate: if ratio_evals > 0.0 { guards as f64 / ratio_evals } else { 0.0 },
        mean_wall_time: spec
            .timing
            .then(|| done.iter().map(|r| r.wall_time).sum::<f64>() / done.len().max(1) as f64),
    }
}

/// Runs every replication of `spec` on at most `jobs` threads and aggregates
/// the errors. Failed replications are recorded rather than propagated.
/// Records come back ordered by replication index whatever `jobs` is.
pub fn run_replications(spec: &ExperimentSpec, jobs: usize) -> Result<(ReplicationStats, Vec<ReplicationRecord>)> {
    spec.validate()?;
    let shared = if spec.shared_data {
        Some(simulate_data(spec, spec.data_seed)?)
    } else {
        None
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let records: Vec<ReplicationRecord> = pool.install(|| {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| replicate(spec, rep, shared.as_deref()))
            .collect()
    });
    Ok((aggregate(spec, &records), records))
}

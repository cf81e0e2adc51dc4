use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Algorithm, BudgetAllocation, Problem};
use crate::error::{Error, Result};
use crate::models::EstimatorMode;
use crate::sa::{BoxRegion, StepSchedule, TrackerInit};
use crate::smc::TangentMode;

/// A complete, serialisable description of one replicated experiment.
///
/// The text form is one `key = value` pair per line. Blank lines and lines
/// starting with `#` are ignored, vectors are comma-separated, and `problem`
/// must be present. Every other key falls back to the problem's default.
///
/// ```
/// use gspe::harness::{ExperimentSpec, Problem};
///
/// let spec: ExperimentSpec = "problem = pde\nreplications = 5\ninitial = 0.5, 1".parse().unwrap();
/// assert_eq!(spec.problem, Problem::Pde);
/// assert_eq!(spec.initial, vec![0.5, 1.0]);
/// assert_eq!(spec.to_config_string().parse::<ExperimentSpec>().unwrap(), spec);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: Problem,
    pub algorithm: Algorithm,
    /// Parameter that generates the data.
    pub theta_star: f64,
    /// Observations per dataset (`T`).
    pub observations: usize,
    pub data_seed: u64,
    /// Reuse one dataset for every replication instead of drawing a fresh
    /// one per replication.
    pub shared_data: bool,
    /// Master seed for the replication streams.
    pub seed: u64,
    pub gamma: Option<u64>,
    /// Outer samples `M` (pde only).
    pub outer: Option<usize>,
    /// Batch size `N` (mle, pde).
    pub batch: usize,
    /// Particles `J` (hmm only).
    pub particles: usize,
    pub iterations: usize,
    pub initial: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fast_scale: f64,
    pub fast_exponent: f64,
    pub slow_scale: f64,
    pub slow_exponent: f64,
    pub estimator: EstimatorMode,
    pub tracker_init: TrackerInit,
    pub tangent_mode: TangentMode,
    pub ess_fraction: f64,
    pub split_fraction: f64,
    pub replications: usize,
    /// Write `trace_<rep>.csv` for every replication.
    pub trace: bool,
    /// Fill the wall-time column of the summary. Off by default because
    /// timings differ between otherwise identical runs.
    pub timing: bool,
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn defaults(problem: Problem) -> Self {
        let base = ExperimentSpec {
            problem,
            algorithm: Algorithm::Mts,
            theta_star: 1.0,
            observations: 100,
            data_seed: 1,
            shared_data: true,
            seed: 2024,
            gamma: None,
            outer: None,
            batch: 1,
            particles: 1,
            iterations: 1,
            initial: vec![],
            lower: vec![],
            upper: vec![],
            fast_scale: 10.0,
            fast_exponent: 0.55,
            slow_scale: 0.5,
            slow_exponent: 1.0,
            estimator: EstimatorMode::ConditionalMc,
            tracker_init: TrackerInit::Zero,
            tangent_mode: TangentMode::FullRecursion,
            ess_fraction: 1.0 / 3.0,
            split_fraction: 0.5,
            replications: 100,
            trace: false,
            timing: false,
            output: PathBuf::from(format!("out/{}", problem.name())),
        };
        match problem {
            Problem::Mle => ExperimentSpec {
                batch: 86,
                iterations: 116,
                initial: vec![0.8],
                lower: vec![0.5],
                upper: vec![2.0],
                tracker_init: TrackerInit::FirstRatio,
                ..base
            },
            Problem::Pde => ExperimentSpec {
                observations: 10,
                outer: Some(7),
                batch: 380,
                iterations: 334,
                initial: vec![0.0, 1.0],
                lower: vec![-1.0, 0.01],
                upper: vec![10.0, 2.0],
                slow_scale: 1.0,
                ..base
            },
            Problem::Hmm => ExperimentSpec {
                shared_data: false,
                particles: 100,
                iterations: 500,
                initial: vec![0.5],
                lower: vec![0.0],
                upper: vec![2.0],
                fast_scale: 100.0,
                fast_exponent: 0.8,
                slow_scale: 0.1,
                replications: 20,
                ..base
            },
        }
    }

    /// Copies `N`, `K`, `M`, `Γ` and the algorithm from a table row.
    pub fn apply_allocation(&mut self, allocation: &BudgetAllocation) {
        self.gamma = Some(allocation.gamma);
        self.outer = allocation.outer;
        self.batch = allocation.batch;
        self.iterations = allocation.iterations;
        self.algorithm = allocation.algorithm;
    }

    pub fn region(&self) -> Result<BoxRegion> {
        BoxRegion::new(self.lower.clone(), self.upper.clone())
    }

    pub fn fast(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.fast_scale, self.fast_exponent)
    }

    pub fn slow(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.slow_scale, self.slow_exponent)
    }

    /// Simulation draws one replication consumes.
    pub fn draws_per_run(&self) -> u64 {
        let k = self.iterations as u64;
        match self.problem {
            Problem::Mle => self.batch as u64 * k,
            Problem::Pde => self.outer.unwrap_or(1) as u64 * self.batch as u64 * k,
            Problem::Hmm => self.particles as u64 * self.observations as u64 * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.problem.coordinates().len();
        for (name, v) in [("initial", &self.initial), ("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != dim {
                return Err(Error::config(format!(
                    "`{name}` needs {dim} value(s) for {}, found {}",
                    self.problem.name(),
                    v.len()
                )));
            }
        }
        let region = self.region()?;
        if !region.contains(&self.initial) {
            return Err(Error::config(format!(
                "initial value {:?} lies outside the feasible box",
                self.initial
            )));
        }
        if !self.fast()?.separates_from(&self.slow()?) {
            return Err(Error::config(
                "fast step exponent must be strictly smaller than the slow one",
            ));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be positive"));
        }
        if self.observations == 0 || self.batch == 0 || self.particles == 0 {
            return Err(Error::config("observations, batch and particles must be positive"));
        }
        if self.problem == Problem::Pde && self.outer.is_none_or(|m| m == 0) {
            return Err(Error::config("pde needs a positive `outer` sample count"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::config("split_fraction must lie in (0, 1)"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::config("ess_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => {
                let p: Problem = value.parse()?;
                if p != self.problem {
                    return Err(Error::config("`problem` cannot change once set"));
                }
            }
            "algorithm" => self.algorithm = value.parse()?,
            "theta_star" => self.theta_star = number(key, value)?,
            "observations" => self.observations = number(key, value)?,
            "data_seed" => self.data_seed = number(key, value)?,
            "shared_data" => self.shared_data = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "gamma" => self.gamma = Some(number(key, value)?),
            "outer" => self.outer = Some(number(key, value)?),
            "batch" => self.batch = number(key, value)?,
            "particles" => self.particles = number(key, value)?,
            "iterations" => self.iterations = number(key, value)?,
            "initial" => self.initial = vector(key, value)?,
            "lower" => self.lower = vector(key, value)?,
            "upper" => self.upper = vector(key, value)?,
            "fast_scale" => self.fast_scale = number(key, value)?,
            "fast_exponent" => self.fast_exponent = number(key, value)?,
            "slow_scale" => self.slow_scale = number(key, value)?,
            "slow_exponent" => self.slow_exponent = number(key, value)?,
            "estimator" => self.estimator = value.parse()?,
            "tracker_init" => self.tracker_init = value.parse()?,
            "tangent_mode" => self.tangent_mode = value.parse()?,
            "ess_fraction" => self.ess_fraction = number(key, value)?,
            "split_fraction" => self.split_fraction = number(key, value)?,
            "replications" => self.replications = number(key, value)?,
            "trace" => self.trace = number(key, value)?,
            "timing" => self.timing = number(key, value)?,
            "output" => self.output = PathBuf::from(value),
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Text form accepted by [`FromStr`]; parsing it gives back `self`.
    pub fn to_config_string(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("problem", self.problem.name().into());
        line("algorithm", self.algorithm.name().into());
        line("theta_star", self.theta_star.to_string());
        line("observations", self.observations.to_string());
        line("data_seed", self.data_seed.to_string());
        line("shared_data", self.shared_data.to_string());
        line("seed", self.seed.to_string());
        if let Some(g) = self.gamma {
            line("gamma", g.to_string());
        }
        if let Some(m) = self.outer {
            line("outer", m.to_string());
        }
        line("batch", self.batch.to_string());
        line("particles", self.particles.to_string());
        line("iterations", self.iterations.to_string());
        line("initial", join(&self.initial));
        line("lower", join(&self.lower));
        line("upper", join(&self.upper));
        line("fast_scale", self.fast_scale.to_string());
        line("fast_exponent", self.fast_exponent.to_string());
        line("slow_scale", self.slow_scale.to_string());
        line("slow_exponent", self.slow_exponent.to_string());
        line("estimator", self.estimator.name().into());
        line("tracker_init", self.tracker_init.name().into());
        line("tangent_mode", self.tangent_mode.name().into());
        line("ess_fraction", self.ess_fraction.to_string());
        line("split_fraction", self.split_fraction.to_string());
        line("replications", self.replications.to_string());
        line("trace", self.trace.to_string());
        line("timing", self.timing.to_string());
        line("output", self.output.display().to_string());
        s
    }
}

impl FromStr for ExperimentSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            pairs.push((k.trim(), v.trim()));
        }
        let problem = pairs
            .iter()
            .find(|(k, _)| *k == "problem")
            .ok_or_else(|| Error::config("missing `problem`"))?
            .1
            .parse()?;
        let mut spec = ExperimentSpec::defaults(problem);
        for (k, v) in pairs {
            spec.set(k, v)?;
        }
        Ok(spec)
    }
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn vector(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| number(key, v.trim())).collect()
}

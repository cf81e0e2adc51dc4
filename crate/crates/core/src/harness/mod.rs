//! Experiment orchestration: allocation tables, replicated runs, summary
//! statistics and CSV output.

mod budget;
mod emit;
mod replicate;
mod spec;

pub use budget::{allocation_for, builtin_allocations, BudgetAllocation};
pub use emit::{emit_results, read_abs_errors, write_replications, write_summary, write_trace, SUMMARY_HEADER};
pub use replicate::{derive_seed, run_replications, CoordinateStats, ReplicationRecord, ReplicationStats};
pub use spec::ExperimentSpec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    Mle,
    Pde,
    Hmm,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Mle => "mle",
            Problem::Pde => "pde",
            Problem::Hmm => "hmm",
        }
    }

    /// Labels of the estimated coordinates.
    pub fn coordinates(&self) -> &'static [&'static str] {
        match self {
            Problem::Mle | Problem::Hmm => &["theta"],
            Problem::Pde => &["mean", "variance"],
        }
    }
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(Problem::Mle),
            "pde" => Ok(Problem::Pde),
            "hmm" => Ok(Problem::Hmm),
            other => Err(Error::config(format!("unknown problem `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mts,
    Sts,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Mts => "mts",
            Algorithm::Sts => "sts",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mts" => Ok(Algorithm::Mts),
            "sts" => Ok(Algorithm::Sts),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

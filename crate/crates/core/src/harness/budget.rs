use super::{Algorithm, Problem};
use crate::error::{Error, Result};

/// How a simulation budget `Γ` is split between batch size, iterations and
/// (for posterior estimation) outer samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetAllocation {
    pub gamma: u64,
    pub outer: Option<usize>,
    pub batch: usize,
    pub iterations: usize,
    pub algorithm: Algorithm,
}

impl BudgetAllocation {
    /// Simulation draws the allocation consumes: `N K` or `M N K`.
    pub fn draws(&self) -> u64 {
        self.outer.unwrap_or(1) as u64 * self.batch as u64 * self.iterations as u64
    }
}

// (Γ, N, K) for the multi-time-scale runs.
const MLE_ROWS: [(u64, usize, usize); 9] = [
    (10_000, 86, 116),
    (30_000, 124, 241),
    (100_000, 186, 539),
    (300_000, 268, 1_120),
    (1_000_000, 400, 2_500),
    (3_000_000, 577, 5_200),
    (10_000_000, 862, 11_604),
    (30_000_000, 1_243, 24_137),
    (100_000_000, 1_857, 53_861),
];

// (Γ, M, N, K) for the multi-time-scale runs.
const PDE_ROWS: [(u64, usize, usize, usize); 9] = [
    (100_000, 4, 214, 106),
    (300_000, 5, 281, 183),
    (1_000_000, 7, 380, 334),
    (3_000_000, 10, 500, 578),
    (10_000_000, 14, 675, 1_055),
    (30_000_000, 18, 889, 1_826),
    (100_000_000, 25, 1_200, 3_334),
    (300_000_000, 32, 1_580, 5_774),
    (1_000_000_000, 44, 2_134, 10_561),
];

/// Built-in allocation rows for both algorithms. The single-time-scale rows
/// swap batch size and iteration count.
pub fn builtin_allocations(problem: Problem) -> Result<Vec<BudgetAllocation>> {
    let rows: Vec<(u64, Option<usize>, usize, usize)> = match problem {
        Problem::Mle => MLE_ROWS.iter().map(|&(g, n, k)| (g, None, n, k)).collect(),
        Problem::Pde => PDE_ROWS.iter().map(|&(g, m, n, k)| (g, Some(m), n, k)).collect(),
        Problem::Hmm => {
            return Err(Error::config(
                "hmm has no allocation table; set particles and iterations directly",
            ))
        }
    };
    let mut out = Vec::with_capacity(rows.len() * 2);
    for (gamma, outer, n, k) in rows {
        out.push(BudgetAllocation {
            gamma,
            outer,
            batch: n,
            iterations: k,
            algorithm: Algorithm::Mts,
        });
        out.push(BudgetAllocation {
            gamma,
            outer,
            batch: k,
            iterations: n,
            algorithm: Algorithm::Sts,
        });
    }
    Ok(out)
}

/// The built-in row for `(problem, algorithm, gamma)`.
pub fn allocation_for(problem: Problem, algorithm: Algorithm, gamma: u64) -> Result<BudgetAllocation> {
    builtin_allocations(problem)?
        .into_iter()
        .find(|a| a.algorithm == algorithm && a.gamma == gamma)
        .ok_or_else(|| Error::config(format!("no built-in {} allocation for budget {gamma}", problem.name())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let a = allocation_for(Problem::Mle, Algorithm::Mts, 10_000).unwrap();
        assert_eq!((a.batch, a.iterations, a.outer), (86, 116, None));
        let s = allocation_for(Problem::Mle, Algorithm::Sts, 10_000).unwrap();
        assert_eq!((s.batch, s.iterations), (116, 86));
        let p = allocation_for(Problem::Pde, Algorithm::Mts, 3_000_000).unwrap();
        assert_eq!((p.outer, p.batch, p.iterations), (Some(10), 500, 578));
        assert!(builtin_allocations(Problem::Hmm).is_err());
        assert!(allocation_for(Problem::Mle, Algorithm::Mts, 12_345).is_err());
    }

    #[test]
    fn rows_respect_their_budget() {
        for problem in [Problem::Mle, Problem::Pde] {
            for a in builtin_allocations(problem).unwrap() {
                // Rows are rounded to integers, so allow a few percent.
                assert!(a.draws() as f64 <= 1.02 * a.gamma as f64, "{a:?}");
                assert!(a.draws() as f64 >= 0.85 * a.gamma as f64, "{a:?}");
            }
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gspe::harness::{
    builtin_allocations, emit_results, run_replications, write_replications, write_summary, Algorithm,
    ExperimentSpec, Problem, ReplicationRecord, ReplicationStats,
};
use gspe::models::EstimatorMode;
use gspe::smc::TangentMode;
use gspe::{Error, Result};

/// Simulation-based parameter estimation experiments.
#[derive(Parser)]
#[command(name = "gspe", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed for the replication streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// `conditional_mc` or `oracle`.
    #[arg(long, global = true)]
    estimator: Option<EstimatorMode>,
    /// `full` or `phi4`.
    #[arg(long, global = true)]
    tangent_mode: Option<TangentMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment file.
    Run {
        spec: PathBuf,
        /// Output directory; defaults to the file's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep built-in budget allocations for both algorithms.
    Table {
        #[arg(long)]
        problem: Problem,
        /// Comma-separated budgets, e.g. `1e4,1e5`. Defaults to every row.
        #[arg(long, value_delimiter = ',', value_parser = parse_budget)]
        budgets: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both algorithms on the hidden Markov model.
    Hmm {
        /// Comma-separated particle counts.
        #[arg(long, value_delimiter = ',', default_value = "100,1000")]
        particles: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single replication with its full trajectory.
    Trace {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_budget(s: &str) -> std::result::Result<u64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x >= 1.0 && x.fract() == 0.0 && x < 1e19 {
        Ok(x as u64)
    } else {
        Err(format!("`{s}` is not a positive integer budget"))
    }
}

impl Global {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(e) = self.estimator {
            spec.estimator = e;
        }
        if let Some(t) = self.tangent_mode {
            spec.tangent_mode = t;
        }
    }
}

fn report(stats: &ReplicationStats) {
    let errors: Vec<String> = stats
        .coordinates
        .iter()
        .map(|c| format!("{} bias {:.3e} mae {:.3e}", c.label, c.mean_abs_bias, c.mae))
        .collect();
    eprintln!(
        "{} {} gamma={} N={} K={}: {} ({} of {} runs)",
        stats.problem.name(),
        stats.algorithm.name(),
        stats.gamma,
        stats.batch,
        stats.iterations,
        errors.join(", "),
        stats.completed,
        stats.requested
    );
}

/// Fails when no replication completed; partial failures only warn.
fn check(stats: &ReplicationStats, records: &mut [ReplicationRecord]) -> Result<()> {
    if stats.completed == 0 {
        if let Some(e) = records.iter_mut().find_map(|r| r.failure.take()) {
            return Err(e);
        }
    }
    if stats.failed() > 0 {
        eprintln!("warning: {} replication(s) failed; see the status column", stats.failed());
    }
    Ok(())
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run_spec(spec: &ExperimentSpec, jobs: usize, out: &Path) -> Result<()> {
    let (stats, mut records) = run_replications(spec, jobs)?;
    report(&stats);
    emit_results(out, &stats, &records)?;
    check(&stats, &mut records)
}

fn sweep(specs: Vec<ExperimentSpec>, jobs: usize, out: &Path, name: impl Fn(&ExperimentSpec) -> String) -> Result<()> {
    mkdir(out)?;
    let mut all = Vec::new();
    for spec in specs {
        let (stats, mut records) = run_replications(&spec, jobs)?;
        report(&stats);
        write_replications(&out.join(name(&spec)), spec.problem, &records)?;
        check(&stats, &mut records)?;
        all.push(stats);
    }
    write_summary(&out.join("summary.csv"), &all)
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Run { spec, out } => {
            let mut spec = ExperimentSpec::from_file(&spec)?;
            g.apply(&mut spec);
            let out = out.unwrap_or_else(|| spec.output.clone());
            run_spec(&spec, g.jobs, &out)
        }
        Command::Trace { spec, out } => {
            let mut spec = ExperimentSpec::from_file(&spec)?;
            g.apply(&mut spec);
            spec.replications = 1;
            spec.trace = true;
            run_spec(&spec, g.jobs, &out)
        }
        Command::Table {
            problem,
            budgets,
            reps,
            out,
        } => {
            let rows = builtin_allocations(problem)?;
            for b in &budgets {
                if !rows.iter().any(|r| r.gamma == *b) {
                    return Err(Error::Config(format!("no built-in {} allocation for budget {b}", problem.name())));
                }
            }
            let specs = rows
                .iter()
                .filter(|r| budgets.is_empty() || budgets.contains(&r.gamma))
                .map(|row| {
                    let mut spec = ExperimentSpec::defaults(problem);
                    spec.apply_allocation(row);
                    spec.replications = reps;
                    g.apply(&mut spec);
                    spec
                })
                .collect();
            sweep(specs, g.jobs, &out, |s| {
                format!("replications_{}_{}.csv", s.algorithm.name(), s.gamma.unwrap_or_default())
            })
        }
        Command::Hmm {
            particles,
            iters,
            reps,
            out,
        } => {
            let mut specs = Vec::new();
            for &j in &particles {
                for algorithm in [Algorithm::Mts, Algorithm::Sts] {
                    let mut spec = ExperimentSpec::defaults(Problem::Hmm);
                    spec.algorithm = algorithm;
                    spec.particles = j;
                    spec.iterations = iters;
                    spec.replications = reps;
                    g.apply(&mut spec);
                    specs.push(spec);
                }
            }
            sweep(specs, g.jobs, &out, |s| {
                format!("replications_{}_J{}.csv", s.algorithm.name(), s.particles)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

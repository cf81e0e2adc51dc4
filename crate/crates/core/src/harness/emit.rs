use std::fs;
use std::path::Path;

use super::{Problem, ReplicationRecord, ReplicationStats};
use crate::error::{Error, Result};
use crate::trace::RunTrace;

pub const SUMMARY_HEADER: [&str; 12] = [
    "problem",
    "algorithm",
    "gamma",
    "M",
    "N",
    "K",
    "R",
    "mean_abs_bias",
    "std",
    "mae",
    "guard_rate",
    "mean_wall_time_s",
];

type CsvWriter = csv::Writer<fs::File>;

fn writer(path: &Path) -> Result<CsvWriter> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn finish(mut w: CsvWriter, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn row<I, S>(w: &mut CsvWriter, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Seventeen significant digits, enough to recover every `f64` exactly.
fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

fn short(x: f64) -> String {
    format!("{x:.6e}")
}

fn columns(problem: Problem, stem: &str) -> Vec<String> {
    let labels = problem.coordinates();
    if labels.len() == 1 {
        vec![stem.to_string()]
    } else {
        labels.iter().map(|l| format!("{stem}_{l}")).collect()
    }
}

/// One row per (stats, coordinate). Multi-coordinate problems are labelled
/// `<problem>-<coordinate>`.
pub fn write_summary(path: &Path, stats: &[ReplicationStats]) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, path, SUMMARY_HEADER)?;
    for s in stats {
        let multi = s.coordinates.len() > 1;
        for c in &s.coordinates {
            let problem = if multi {
                format!("{}-{}", s.problem.name(), c.label)
            } else {
                s.problem.name().to_string()
            };
            row(
                &mut w,
                path,
                [
                    problem,
                    s.algorithm.name().to_string(),
                    s.gamma.to_string(),
                    s.outer.map(|m| m.to_string()).unwrap_or_default(),
                    s.batch.to_string(),
                    s.iterations.to_string(),
                    s.completed.to_string(),
                    short(c.mean_abs_bias),
                    short(c.std),
                    short(c.mae),
                    short(s.guard_rate),
                    s.mean_wall_time.map(short).unwrap_or_default(),
                ],
            )?;
        }
    }
    finish(w, path)
}

/// `rep,seed,final_estimate…,reference…,abs_error…,status`. Failed runs keep
/// their row with empty numeric fields and the error in `status`.
pub fn write_replications(path: &Path, problem: Problem, records: &[ReplicationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let d = problem.coordinates().len();
    let mut header = vec!["rep".to_string(), "seed".to_string()];
    for stem in ["final_estimate", "reference", "abs_error"] {
        header.extend(columns(problem, stem));
    }
    header.push("status".into());
    row(&mut w, path, &header)?;
    for r in records {
        let mut fields = vec![r.rep.to_string(), r.seed.to_string()];
        let pad = |v: &[f64]| -> Vec<String> {
            if v.len() == d {
                v.iter().map(|x| exact(*x)).collect()
            } else {
                vec![String::new(); d]
            }
        };
        fields.extend(pad(&r.estimate));
        fields.extend(pad(&r.reference));
        fields.extend(pad(&r.abs_errors()));
        fields.push(match &r.failure {
            None => "ok".into(),
            Some(e) => e.to_string(),
        });
        row(&mut w, path, &fields)?;
    }
    finish(w, path)
}

/// `k,theta…,tracker_norm` for `k = 0..=K`; the norm is empty at `k = 0`.
pub fn write_trace(path: &Path, problem: Problem, trace: &RunTrace) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend(columns(problem, "theta"));
    header.push("tracker_norm".into());
    row(&mut w, path, &header)?;
    for (k, theta) in trace.thetas.iter().enumerate() {
        let mut fields = vec![k.to_string()];
        fields.extend(theta.iter().map(|x| exact(*x)));
        fields.push(if k == 0 {
            String::new()
        } else {
            exact(trace.tracker_norms[k - 1])
        });
        row(&mut w, path, &fields)?;
    }
    finish(w, path)
}

/// Writes `summary.csv`, `replications.csv` when there are records, and
/// `trace_<rep>.csv` for every record that kept its trace.
pub fn emit_results(dir: &Path, stats: &ReplicationStats, records: &[ReplicationRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_summary(&dir.join("summary.csv"), std::slice::from_ref(stats))?;
    if !records.is_empty() {
        write_replications(&dir.join("replications.csv"), stats.problem, records)?;
    }
    for r in records {
        if let Some(trace) = &r.trace {
            write_trace(&dir.join(format!("trace_{}.csv", r.rep)), stats.problem, trace)?;
        }
    }
    Ok(())
}

/// Reads the `abs_error` columns back from a replications file, one vector
/// per row (empty for failed runs).
pub fn read_abs_errors(path: &Path) -> Result<Vec<Vec<f64>>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let idx: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("abs_error"))
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let mut v = Vec::with_capacity(idx.len());
        for &i in &idx {
            let field = &rec[i];
            if field.is_empty() {
                v.clear();
                break;
            }
            v.push(
                field
                    .parse()
                    .map_err(|_| Error::config(format!("{}: bad number `{field}`", path.display())))?,
            );
        }
        out.push(v);
    }
    Ok(out)
}

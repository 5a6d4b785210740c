//! Result rows, their CSV form, and per-grid-point summaries.

use std::fmt::Write as _;
use std::io::BufRead;

use super::config::SamplerKind;
use crate::error::{Error, Result};

/// Outcome of one sampler run on one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub sampler: SamplerKind,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub n: usize,
    pub l: Option<usize>,
    pub replicate: usize,
    /// Stream identifier of the replicate's dataset.
    pub replicate_seed: u64,
    /// Squared error of each parameter component; empty for failed runs.
    pub squared_errors: Vec<f64>,
    pub total_squared_error: Option<f64>,
    pub bf_calls: usize,
    pub acceptance_rate: Option<f64>,
    /// `ok`, or the error category for a failed run.
    pub status: String,
    pub wall_seconds: Option<f64>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const PARAMETER_DIM: usize = 3;

pub fn csv_header(timing: bool) -> String {
    let mut h = String::from("experiment,sampler,M,K,N,L,replicate,replicate_seed");
    for i in 1..=PARAMETER_DIM {
        write!(h, ",sq_err_{i}").unwrap();
    }
    h.push_str(",total_sq_err,bf_calls,acceptance_rate,status");
    if timing {
        h.push_str(",wall_seconds");
    }
    h
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn row_to_csv(row: &ResultRow, timing: bool) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{}",
        row.experiment,
        row.sampler,
        cell(row.m),
        cell(row.k),
        row.n,
        cell(row.l),
        row.replicate,
        row.replicate_seed
    );
    for i in 0..PARAMETER_DIM {
        write!(s, ",{}", cell(row.squared_errors.get(i))).unwrap();
    }
    write!(
        s,
        ",{},{},{},{}",
        cell(row.total_squared_error),
        row.bf_calls,
        cell(row.acceptance_rate),
        row.status
    )
    .unwrap();
    if timing {
        write!(s, ",{}", cell(row.wall_seconds)).unwrap();
    }
    s
}

/// Parses a results file written by [`super::run_experiment`]. Lines starting
/// with `#` are skipped; a `wall_seconds` column is optional.
pub fn read_results<R: BufRead>(input: R) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut timing = None;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let Some(with_timing) = timing else {
            timing = Some(if line == csv_header(true) {
                true
            } else if line == csv_header(false) {
                false
            } else {
                return Err(err("unrecognised header".into()));
            });
            continue;
        };
        let f: Vec<&str> = line.split(',').collect();
        let expected = 12 + PARAMETER_DIM + usize::from(with_timing);
        if f.len() != expected {
            return Err(err(format!("{} fields, expected {expected}", f.len())));
        }
        let opt_usize = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("bad integer `{s}`")))
            }
        };
        let opt_f64 = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("bad number `{s}`")))
            }
        };
        let req = |v: Option<usize>, name: &str| v.ok_or_else(|| err(format!("missing {name}")));
        let e = 8 + PARAMETER_DIM;
        let squared_errors: Vec<f64> = f[8..e]
            .iter()
            .map(|s| opt_f64(s))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        rows.push(ResultRow {
            experiment: f[0].to_string(),
            sampler: f[1].parse().map_err(|e: Error| err(e.to_string()))?,
            m: opt_usize(f[2])?,
            k: opt_usize(f[3])?,
            n: req(opt_usize(f[4])?, "N")?,
            l: opt_usize(f[5])?,
            replicate: req(opt_usize(f[6])?, "replicate")?,
            replicate_seed: f[7]
                .parse()
                .map_err(|_| err(format!("bad seed `{}`", f[7])))?,
            squared_errors,
            total_squared_error: opt_f64(f[e])?,
            bf_calls: req(opt_usize(f[e + 1])?, "bf_calls")?,
            acceptance_rate: opt_f64(f[e + 2])?,
            status: f[e + 3].to_string(),
            wall_seconds: if with_timing {
                opt_f64(f[e + 4])?
            } else {
                None
            },
        });
    }
    Ok(rows)
}

/// Mean squared error and its standard error at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub sampler: SamplerKind,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub n: usize,
    pub l: Option<usize>,
    /// Successful replicates.
    pub replicates: usize,
    pub failures: usize,
    /// Absent when every replicate failed.
    pub mean: Option<f64>,
    /// Absent with fewer than two successful replicates.
    pub standard_error: Option<f64>,
    pub median: Option<f64>,
}

/// Groups rows by sampler and grid point, in order of first appearance.
pub fn aggregate_results(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::usage("result table is empty"));
    }
    type Key = (
        SamplerKind,
        Option<usize>,
        Option<usize>,
        usize,
        Option<usize>,
    );
    let mut keys: Vec<Key> = Vec::new();
    let mut groups: Vec<(Vec<f64>, usize)> = Vec::new();
    for r in rows {
        let key = (r.sampler, r.m, r.k, r.n, r.l);
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                groups.push((Vec::new(), 0));
                keys.len() - 1
            }
        };
        match (r.is_ok(), r.total_squared_error) {
            (true, Some(e)) => groups[idx].0.push(e),
            _ => groups[idx].1 += 1,
        }
    }
    Ok(keys
        .into_iter()
        .zip(groups)
        .map(|((sampler, m, k, n, l), (errs, failures))| {
            let count = errs.len();
            let mean = (count > 0).then(|| errs.iter().sum::<f64>() / count as f64);
            let standard_error = (count > 1).then(|| {
                let mu = mean.expect("non-empty");
                let var = errs.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            });
            SummaryRow {
                sampler,
                m,
                k,
                n,
                l,
                replicates: count,
                failures,
                mean,
                standard_error,
                median: median(&errs),
            }
        })
        .collect())
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    })
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s =
        String::from("sampler,M,K,N,L,replicates,failures,mean_sq_err,std_err,median_sq_err\n");
    for r in summary {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.sampler,
            cell(r.m),
            cell(r.k),
            r.n,
            cell(r.l),
            r.replicates,
            r.failures,
            cell(r.mean),
            cell(r.standard_error),
            cell(r.median)
        )
        .unwrap();
    }
    s
}

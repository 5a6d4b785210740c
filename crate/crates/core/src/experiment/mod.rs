//! Replicated sampler comparisons on the tracking model.
//!
//! Replicate `r` of an experiment sees the same simulated dataset under every
//! sampler and grid point, so comparisons between samplers are paired. Random
//! streams are derived from `(seed, experiment id, grid point, replicate)`
//! only; adding replicates or grid values leaves existing rows unchanged.

mod config;
mod results;

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentKind, SamplerKind, KEYS};
pub use results::{
    aggregate_results, csv_header, read_results, row_to_csv, summary_csv, ResultRow, SummaryRow,
};

use crate::bf::ParticleFilterLikelihood;
use crate::error::{Error, Result};
use crate::nis::{posterior_mean, run_sampler, SamplerConfig};
use crate::numerics::{derive_id, RngStream};
use crate::pmh::{pmh_posterior_mean, run_pmh, PmhConfig};
use crate::ssm::{simulate_dataset, Dataset};
use crate::target::{CountingLikelihood, GaussianPrior, ParameterVector};
use crate::verify::{run_suite, SuiteReport};

const DATASET_TAG: u64 = 0xda7a;
const SAMPLER_TAG: u64 = 0x5a3b;

/// One sampler setting within an experiment grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub sampler: SamplerKind,
    /// Population size, or for pMH the population size it is matched against.
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub n: usize,
    /// Chain length (pMH only).
    pub l: Option<usize>,
}

impl GridPoint {
    fn key(&self) -> [u64; 5] {
        let o = |v: Option<usize>| v.map_or(0, |x| x as u64 + 1);
        [
            self.sampler.code(),
            o(self.m),
            o(self.k),
            self.n as u64,
            o(self.l),
        ]
    }
}

/// Expands the configuration into grid points in output order.
pub fn grid_points(config: &ExperimentConfig) -> Vec<GridPoint> {
    let samplers = config.effective_samplers();
    let k = config.iterations;
    let point = |sampler, m: usize, n: usize| match sampler {
        SamplerKind::Pmh => GridPoint {
            sampler,
            m: Some(m),
            k: Some(k),
            n,
            l: Some(m * k),
        },
        _ => GridPoint {
            sampler,
            m: Some(m),
            k: Some(k),
            n,
            l: None,
        },
    };
    let n0 = config.n_values[0];
    let mut out = Vec::new();
    match config.kind {
        ExperimentKind::MseVsM => {
            for &m in &config.m_values {
                for &s in &samplers {
                    out.push(point(s, m, n0));
                }
            }
        }
        ExperimentKind::NSweep => {
            for &m in &config.m_values {
                for &n in &config.n_values {
                    for &s in &samplers {
                        out.push(point(s, m, n));
                    }
                }
            }
        }
        ExperimentKind::PmhChainSweep => {
            for &l in &config.l_values {
                out.push(GridPoint {
                    sampler: SamplerKind::Pmh,
                    m: None,
                    k: None,
                    n: n0,
                    l: Some(l),
                });
            }
        }
        ExperimentKind::SingleRun => {
            let m0 = config.m_values[0];
            for &s in &samplers {
                out.push(point(s, m0, n0));
            }
        }
        ExperimentKind::Verify => {}
    }
    out
}

/// The stream a replicate's dataset is simulated from.
pub fn dataset_stream(config: &ExperimentConfig, replicate: usize) -> RngStream {
    RngStream::new(
        config.seed,
        derive_id(config.id_key(), &[DATASET_TAG, replicate as u64]),
    )
}

fn sampler_stream(config: &ExperimentConfig, point: &GridPoint, replicate: usize) -> RngStream {
    let mut key = vec![SAMPLER_TAG];
    key.extend(point.key());
    key.push(replicate as u64);
    RngStream::new(config.seed, derive_id(config.id_key(), &key))
}

/// Simulates the dataset of one replicate.
pub fn simulate_replicate(config: &ExperimentConfig, replicate: usize) -> Result<Dataset> {
    config.validate()?;
    let model = config.tracking_model()?;
    let mut rng = dataset_stream(config, replicate);
    let sim = simulate_dataset(&model, &config.truth, config.horizon, &mut rng)?;
    Ok(Dataset {
        sensor_positions: model.sensors.positions().to_vec(),
        truth: config.truth,
        seed: rng.stream_id(),
        observations: sim.observations,
    })
}

struct Outcome {
    estimate: ParameterVector,
    acceptance_rate: Option<f64>,
}

fn run_point(
    config: &ExperimentConfig,
    point: &GridPoint,
    observations: &[Vec<f64>],
    rng: &RngStream,
    calls: &mut usize,
) -> Result<Outcome> {
    let model = config.tracking_model()?;
    let prior = GaussianPrior::tracking();
    let likelihood =
        CountingLikelihood::new(ParticleFilterLikelihood::new(&model, observations, point.n));
    let outcome = match point.sampler {
        SamplerKind::Npmc | SamplerKind::Pmc => {
            let (m, k) = (
                point.m.expect("population size"),
                point.k.expect("iterations"),
            );
            let mut sc = if point.sampler == SamplerKind::Npmc {
                SamplerConfig::npmc(m, k, point.n)
            } else {
                SamplerConfig::pmc(m, k, point.n)
            };
            if let (SamplerKind::Npmc, Some(c)) = (point.sampler, config.clip) {
                sc = sc.with_clip(c);
            }
            let result = run_sampler(&prior, &likelihood, &sc, rng);
            *calls = likelihood.calls();
            let clouds = result?;
            Outcome {
                estimate: posterior_mean(clouds.last().expect("K+1 populations")),
                acceptance_rate: None,
            }
        }
        SamplerKind::Pmh => {
            let pc = PmhConfig {
                chain_length: point.l.expect("chain length"),
                proposal_covariance: PmhConfig::tracking_proposal(config.pmh_scale),
                particles: point.n,
                burn_in_fraction: config.burn_in,
            };
            let result = run_pmh(&prior, &likelihood, &pc, rng);
            *calls = likelihood.calls();
            let run = result?;
            Outcome {
                estimate: pmh_posterior_mean(&run.chain, config.burn_in)?,
                acceptance_rate: Some(run.acceptance_rate),
            }
        }
    };
    Ok(outcome)
}

fn run_job(
    config: &ExperimentConfig,
    point: &GridPoint,
    replicate: usize,
    dataset: &Dataset,
) -> Result<ResultRow> {
    let rng = sampler_stream(config, point, replicate);
    let start = Instant::now();
    let mut calls = 0;
    let outcome = run_point(config, point, &dataset.observations, &rng, &mut calls);
    let wall = start.elapsed().as_secs_f64();
    let mut row = ResultRow {
        experiment: config.id.clone(),
        sampler: point.sampler,
        m: point.m,
        k: point.k,
        n: point.n,
        l: point.l,
        replicate,
        replicate_seed: dataset.seed,
        squared_errors: Vec::new(),
        total_squared_error: None,
        bf_calls: calls,
        acceptance_rate: None,
        status: "ok".into(),
        wall_seconds: config.timing.then_some(wall),
    };
    match outcome {
        Ok(o) => {
            let truth = config.truth.to_theta();
            row.squared_errors = o
                .estimate
                .iter()
                .zip(truth.iter())
                .map(|(e, t)| (e - t).powi(2))
                .collect();
            row.total_squared_error = Some(row.squared_errors.iter().sum());
            row.acceptance_rate = o.acceptance_rate;
        }
        Err(Error::DegenerateWeights { .. }) => row.status = "degenerate_weights".into(),
        Err(Error::Numerical(_)) => row.status = "numerical".into(),
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// Builds a worker pool of the configured size (0 = all cores).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::usage(format!("experiment.workers: {e}")))
}

/// Runs every grid point on every replicate. Sampler failures become rows
/// with a non-`ok` status; configuration errors abort the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.kind == ExperimentKind::Verify {
        return Err(Error::usage(
            "experiment.kind: verify produces a report, not result rows",
        ));
    }
    let points = grid_points(config);
    let pool = worker_pool(config.workers)?;
    pool.install(|| {
        let datasets: Vec<Dataset> = (0..config.replicates)
            .into_par_iter()
            .map(|r| simulate_replicate(config, r))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = (0..points.len())
            .flat_map(|p| (0..config.replicates).map(move |r| (p, r)))
            .collect();
        // collect() keeps job order, which is (grid point, replicate)
        jobs.par_iter()
            .map(|&(p, r)| run_job(config, &points[p], r, &datasets[r]))
            .collect()
    })
}

/// `#`-prefixed provenance lines.
pub fn preamble(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    writeln!(s, "# npmc experiment results").unwrap();
    writeln!(s, "# experiment: {}", config.id).unwrap();
    writeln!(s, "# kind: {}", config.kind).unwrap();
    writeln!(s, "# config_sha256: {}", config.hash()).unwrap();
    writeln!(s, "# build: npmc {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "# seed: {}", config.seed).unwrap();
    s
}

pub fn results_csv(config: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let mut s = preamble(config);
    s.push_str(&csv_header(config.timing));
    s.push('\n');
    for r in rows {
        s.push_str(&row_to_csv(r, config.timing));
        s.push('\n');
    }
    s
}

/// Runs the configured verification suites on the configured worker pool.
pub fn run_verification(config: &ExperimentConfig) -> Result<Vec<SuiteReport>> {
    let pool = worker_pool(config.workers)?;
    pool.install(|| {
        config
            .suites
            .iter()
            .map(|s| run_suite(*s, config.seed))
            .collect()
    })
}

pub fn verification_csv(config: &ExperimentConfig, reports: &[SuiteReport]) -> String {
    let mut s = preamble(config);
    s.push_str("suite,check,passed,detail\n");
    for r in reports {
        for c in &r.checks {
            writeln!(
                s,
                "{},{},{},\"{}\"",
                r.suite,
                c.name,
                c.passed,
                c.detail.replace('"', "'")
            )
            .unwrap();
        }
    }
    s
}

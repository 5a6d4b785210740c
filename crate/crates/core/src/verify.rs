//! Statistical and property checks that exercise the library end to end.
//!
//! Each suite runs with fixed seeds and returns a [`SuiteReport`]. The study
//! functions underneath return raw statistics so callers can apply their own
//! thresholds.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bf::{run_bootstrap_filter, ParticleFilterLikelihood};
use crate::error::{Error, Result};
use crate::nis::{clip_weights, posterior_mean, run_sampler, SamplerConfig};
use crate::numerics::{standard_normal, RngStream};
use crate::pmh::{post_burn_in, run_pmh, PmhConfig};
use crate::ssm::{exit_wall, kalman_log_likelihood, reflect, LinearGaussianModel, TrackingModel};
use crate::target::{ConjugateGaussian, CountingLikelihood, LogLikelihood, Prior};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Unbiasedness,
    Rate,
    Clipping,
    Reflection,
    Pmh,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Unbiasedness,
        Suite::Rate,
        Suite::Clipping,
        Suite::Reflection,
        Suite::Pmh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Unbiasedness => "unbiasedness",
            Suite::Rate => "rate",
            Suite::Clipping => "clipping",
            Suite::Reflection => "reflection",
            Suite::Pmh => "pmh",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::usage(format!(
                    "unknown suite `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check, `PASS`/`FAIL` first.
    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}/{}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    self.suite,
                    c.name,
                    c.detail
                )
            })
            .collect()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let rng = RngStream::new(seed, 0x7e51);
    let checks = match suite {
        Suite::Unbiasedness => unbiasedness_suite(&rng)?,
        Suite::Rate => rate_suite(&rng)?,
        Suite::Clipping => clipping_suite(10_000, &rng)?,
        Suite::Reflection => reflection_suite(100_000, &rng)?,
        Suite::Pmh => pmh_suite(&rng)?,
    };
    Ok(SuiteReport { suite, checks })
}

// ---------------------------------------------------------------------------
// Unbiasedness of the particle likelihood

/// The scalar model `x_n = 0.9 x_{n-1} + u_n`, `y_n = x_n + v_n`, unit noises,
/// and a horizon-`horizon` dataset drawn from it.
pub fn scalar_benchmark(
    horizon: usize,
    rng: &mut RngStream,
) -> Result<(LinearGaussianModel, Vec<Vec<f64>>)> {
    let model = LinearGaussianModel::scalar(0.9, 1.0, 1.0, 1.0, 0.0, 1.0)?;
    let mut x = standard_normal(rng);
    let mut ys = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        x = 0.9 * x + standard_normal(rng);
        ys.push(vec![x + standard_normal(rng)]);
    }
    Ok((model, ys))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioStudy {
    pub particles: usize,
    pub replicates: usize,
    /// Sample mean of `ℓ^N / ℓ`.
    pub mean_ratio: f64,
    pub standard_error: f64,
}

/// Replicates the particle estimate of a linear-Gaussian likelihood and
/// compares it with the Kalman value.
pub fn likelihood_ratio_study(
    model: &LinearGaussianModel,
    observations: &[Vec<f64>],
    particles: usize,
    replicates: usize,
    rng: &RngStream,
) -> Result<RatioStudy> {
    if replicates < 2 {
        return Err(Error::usage("need at least two replicates"));
    }
    let theta: [f64; 0] = [];
    let exact = kalman_log_likelihood(model, &theta, observations)?;
    let ratios: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let est = run_bootstrap_filter(
                model,
                &theta,
                observations,
                particles,
                &mut rng.split(&[r as u64]),
            )?;
            Ok((est.log_value.value() - exact).exp())
        })
        .collect::<Result<_>>()?;
    let (mean, var) = mean_var(&ratios);
    Ok(RatioStudy {
        particles,
        replicates,
        mean_ratio: mean,
        standard_error: (var / replicates as f64).sqrt(),
    })
}

fn unbiasedness_suite(rng: &RngStream) -> Result<Vec<Check>> {
    let (model, ys) = scalar_benchmark(20, &mut rng.split(&[0]))?;
    let mut checks = Vec::new();
    for n in [10, 50, 400] {
        let s = likelihood_ratio_study(&model, &ys, n, 500, &rng.split(&[1, n as u64]))?;
        let ok = (s.mean_ratio - 1.0).abs() <= 4.0 * s.standard_error;
        checks.push(Check::new(
            format!("N={n}"),
            ok,
            format!(
                "mean ratio {:.4} ± {:.4} (SE) over {} runs",
                s.mean_ratio, s.standard_error, s.replicates
            ),
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Convergence rate

#[derive(Clone, Debug, PartialEq)]
pub struct RateStudy {
    /// `(M, RMSE)` pairs.
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    /// Standard error of the slope, from the delta-method spread of each log RMSE.
    pub slope_se: f64,
}

/// Root-mean-square error of the final-population posterior mean against
/// `reference`, for each `M`, followed by a least-squares fit of
/// `ln RMSE = a + b ln M`.
pub fn rate_study<P, L>(
    prior: &P,
    likelihood: &L,
    reference: f64,
    sample_sizes: &[usize],
    iterations: usize,
    particles: usize,
    replicates: usize,
    rng: &RngStream,
) -> Result<RateStudy>
where
    P: Prior + ?Sized,
    L: LogLikelihood + ?Sized,
{
    if sample_sizes.len() < 2 || replicates == 0 {
        return Err(Error::usage(
            "rate study needs two sample sizes and one replicate",
        ));
    }
    let mut points = Vec::with_capacity(sample_sizes.len());
    for &m in sample_sizes {
        let config = SamplerConfig::npmc(m, iterations, particles);
        let mut sq = 0.0;
        for r in 0..replicates {
            let clouds = run_sampler(
                prior,
                likelihood,
                &config,
                &rng.split(&[m as u64, r as u64]),
            )?;
            let est = posterior_mean(clouds.last().expect("K+1 clouds"))[0];
            sq += (est - reference).powi(2);
        }
        points.push((m, (sq / replicates as f64).sqrt()));
    }
    let (slope, _) = log_log_fit(&points);
    let sxx: f64 = {
        let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - xbar).powi(2)).sum()
    };
    // Var(ln RMSE) ≈ 1 / (2R) for a mean of R squared errors.
    let slope_se = (1.0 / (2.0 * replicates as f64) / sxx).sqrt();
    Ok(RateStudy {
        points,
        slope,
        slope_se,
    })
}

/// Least-squares slope and intercept of `ln y` against `ln x`.
pub fn log_log_fit(points: &[(usize, f64)]) -> (f64, f64) {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, ybar - slope * xbar)
}

/// `θ ~ N(0, 1)` with five unit-variance observations.
pub fn conjugate_benchmark() -> ConjugateGaussian {
    ConjugateGaussian {
        prior_mean: 0.0,
        prior_var: 1.0,
        noise_var: 1.0,
        observations: vec![0.8, 1.4, 0.3, 1.1, 0.9],
    }
}

/// A one-step linear-Gaussian model whose likelihood in `θ` is
/// `N(y; θ, 1)`: `x_1 = θ + u`, `y = x_1 + v`, `u, v ~ N(0, 1/2)`.
pub fn one_step_benchmark() -> Result<(LinearGaussianModel, Vec<Vec<f64>>, ConjugateGaussian)> {
    let model = LinearGaussianModel::scalar(0.0, 0.5, 1.0, 0.5, 0.0, 1.0)?
        .with_control(DMatrix::from_element(1, 1, 1.0))?;
    let y = 1.2;
    let exact = ConjugateGaussian {
        prior_mean: 0.0,
        prior_var: 1.0,
        noise_var: 1.0,
        observations: vec![y],
    };
    Ok((model, vec![vec![y]], exact))
}

fn rate_suite(rng: &RngStream) -> Result<Vec<Check>> {
    let sizes = [100, 1000, 10_000];
    let toy = conjugate_benchmark();
    let exact = rate_study(
        &toy.prior(),
        &toy.likelihood(),
        toy.posterior().0,
        &sizes,
        2,
        1,
        200,
        &rng.split(&[0]),
    )?;

    let (model, ys, reference) = one_step_benchmark()?;
    let bf = ParticleFilterLikelihood::new(&model, &ys, 50);
    let approx = rate_study(
        &reference.prior(),
        &bf,
        reference.posterior().0,
        &sizes,
        2,
        50,
        200,
        &rng.split(&[1]),
    )?;

    Ok([
        ("exact likelihood", exact),
        ("particle likelihood N=50", approx),
    ]
    .into_iter()
    .map(|(name, s)| {
        Check::new(
            name,
            (-0.65..=-0.35).contains(&s.slope),
            format!(
                "slope {:.3} ± {:.3} (95%), RMSE {:?}",
                s.slope,
                1.96 * s.slope_se,
                s.points
            ),
        )
    })
    .collect())
}

// ---------------------------------------------------------------------------
// Clipping

/// Counts violations of the clipping invariants over random weight vectors.
pub fn clipping_suite(cases: usize, rng: &RngStream) -> Result<Vec<Check>> {
    let mut rng = rng.split(&[0]);
    let mut bad = [0usize; 5];
    for _ in 0..cases {
        let m = rng.gen_range(1..=64usize);
        let max_c = (m as f64).sqrt().floor() as usize;
        let m_c = rng.gen_range(1..=max_c.max(1));
        let raw: Vec<f64> = (0..m)
            .map(|_| {
                if rng.gen_bool(0.05) {
                    f64::NEG_INFINITY
                } else if rng.gen_bool(0.2) {
                    // repeated values exercise ties
                    rng.gen_range(0..3) as f64
                } else {
                    rng.gen_range(-50.0..50.0)
                }
            })
            .collect();
        let clipped = clip_weights(&raw, m_c)?;

        let mut sorted = raw.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let t = sorted[m_c - 1];
        if clipped.iter().zip(&raw).any(|(c, r)| *c != r.min(t)) {
            bad[0] += 1;
        }
        if clip_weights(&clipped, m_c)? != clipped {
            bad[1] += 1;
        }
        let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..m));
        if raw[i] <= raw[j] && clipped[i] > clipped[j] {
            bad[2] += 1;
        }
        if t.is_finite() {
            let total = crate::numerics::log_sum_exp(&clipped)?;
            let max_w = clipped
                .iter()
                .map(|c| (c - total).exp())
                .fold(0.0, f64::max);
            if max_w > 1.0 / m_c as f64 + 1e-12 {
                bad[3] += 1;
            }
        }
        if clip_weights(&raw, 1)? != raw {
            bad[4] += 1;
        }
    }
    let names = [
        "sort-oracle equality",
        "idempotence",
        "monotonicity",
        "ceiling 1/M_c",
        "M_c=1 identity",
    ];
    Ok(names
        .iter()
        .zip(bad)
        .map(|(n, b)| Check::new(*n, b == 0, format!("{b} violations in {cases} cases")))
        .collect())
}

// ---------------------------------------------------------------------------
// Reflection

/// Containment and speed preservation along tracking trajectories, and
/// agreement with a one-wall mirror oracle for single bounces.
pub fn reflection_suite(steps: usize, rng: &RngStream) -> Result<Vec<Check>> {
    let model = TrackingModel::default();
    let region = model.region;
    let mut rng = rng.split(&[0]);
    let (mut outside, mut speed_err, mut mirror_err, mut mirror_cases) =
        (0usize, 0.0f64, 0.0f64, 0usize);
    let mut state = model.prior_sample(&mut rng);
    for step in 0..steps {
        // restart every 100 steps so the velocity random walk stays bounded
        if step % 100 == 0 {
            state = model.prior_sample(&mut rng);
        }
        state = model.transition(&state, &mut rng)?;
        if !region.contains(state.position) {
            outside += 1;
        }

        let prev = [rng.gen_range(-20.0..20.0), rng.gen_range(-10.0..10.0)];
        let s = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        let proposed = [prev[0] + s[0], prev[1] + s[1]];
        if region.contains(proposed) {
            continue;
        }
        let vel = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let (p, v) = reflect(&region, prev, proposed, vel)?;
        speed_err = speed_err.max((v[0].hypot(v[1]) - vel[0].hypot(vel[1])).abs());
        if !region.contains(p) {
            outside += 1;
        }
        let mirrored = exit_wall(&region, prev, s).mirror(&region, proposed);
        if region.contains(mirrored) {
            mirror_cases += 1;
            mirror_err = mirror_err.max((mirrored[0] - p[0]).abs().max((mirrored[1] - p[1]).abs()));
        }
    }
    Ok(vec![
        Check::new(
            "containment",
            outside == 0,
            format!("{outside} points outside over {steps} steps"),
        ),
        Check::new(
            "mirror oracle",
            mirror_err <= 1e-10,
            format!("max deviation {mirror_err:e} over {mirror_cases} single bounces"),
        ),
        Check::new(
            "speed preservation",
            speed_err <= 1e-12,
            format!("max speed change {speed_err:e}"),
        ),
    ])
}

// ---------------------------------------------------------------------------
// Particle Metropolis-Hastings

#[derive(Clone, Debug, PartialEq)]
pub struct ChainStudy {
    pub kept: usize,
    /// Integrated autocorrelation time estimated by batch means.
    pub autocorrelation_time: f64,
    pub effective_size: f64,
    pub mean: f64,
    pub variance: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub thinned: usize,
}

/// Runs an exact-likelihood chain on a conjugate model and compares its
/// post-burn-in draws with the analytic posterior.
pub fn conjugate_chain_study(
    toy: &ConjugateGaussian,
    chain_length: usize,
    rng: &RngStream,
) -> Result<ChainStudy> {
    let (post_mean, post_var) = toy.posterior();
    let config = PmhConfig {
        chain_length,
        proposal_covariance: DMatrix::from_element(1, 1, 2.4f64.powi(2) * post_var),
        particles: 1,
        burn_in_fraction: 0.5,
    };
    let run = run_pmh(&toy.prior(), &toy.likelihood(), &config, rng)?;
    let draws: Vec<f64> = post_burn_in(&run.chain, 0.5)?
        .iter()
        .map(|s| s.theta[0])
        .collect();
    let (mean, variance) = mean_var(&draws);
    let tau = batch_means_tau(&draws);
    let stride = tau.ceil().max(1.0) as usize;
    let thinned: Vec<f64> = draws.iter().step_by(stride).copied().collect();
    let normal =
        Normal::new(post_mean, post_var.sqrt()).map_err(|e| Error::numerical(e.to_string()))?;
    let d = ks_statistic(&thinned, |x| normal.cdf(x));
    Ok(ChainStudy {
        kept: draws.len(),
        autocorrelation_time: tau,
        effective_size: draws.len() as f64 / tau,
        mean,
        variance,
        ks_statistic: d,
        ks_p_value: kolmogorov_p_value(d, thinned.len()),
        thinned: thinned.len(),
    })
}

/// Counts likelihood evaluations in a chain driven by a bootstrap filter.
pub fn pmh_call_count(proposals: usize, rng: &RngStream) -> Result<(usize, usize)> {
    let (model, ys) = scalar_benchmark(10, &mut rng.split(&[0]))?;
    let model = model.with_control(DMatrix::from_element(1, 1, 1.0))?;
    let bf = CountingLikelihood::new(ParticleFilterLikelihood::new(&model, &ys, 20));
    let prior = crate::target::GaussianPrior::diagonal(&[0.0], &[1.0])?;
    let config = PmhConfig {
        chain_length: proposals,
        proposal_covariance: DMatrix::from_element(1, 1, 0.1),
        particles: 20,
        burn_in_fraction: 0.5,
    };
    run_pmh(&prior, &bf, &config, &rng.split(&[1]))?;
    Ok((bf.calls(), 1 + proposals))
}

fn pmh_suite(rng: &RngStream) -> Result<Vec<Check>> {
    let (calls, expected) = pmh_call_count(500, &rng.split(&[0]))?;
    let toy = conjugate_benchmark();
    let s = conjugate_chain_study(&toy, 40_000, &rng.split(&[1]))?;
    let (m, v) = toy.posterior();
    let mean_se = (v / s.effective_size).sqrt();
    let var_se = v * (2.0 / s.effective_size).sqrt();
    Ok(vec![
        Check::new(
            "caching",
            calls == expected,
            format!("{calls} likelihood calls, expected {expected}"),
        ),
        Check::new(
            "posterior mean",
            (s.mean - m).abs() <= 4.0 * mean_se,
            format!(
                "{:.4} vs {m:.4}, 4 SE = {:.4}, ESS {:.0}",
                s.mean,
                4.0 * mean_se,
                s.effective_size
            ),
        ),
        Check::new(
            "posterior variance",
            (s.variance - v).abs() <= 4.0 * var_se,
            format!("{:.4} vs {v:.4}, 4 SE = {:.4}", s.variance, 4.0 * var_se),
        ),
        Check::new(
            "Kolmogorov-Smirnov",
            s.ks_p_value > 1e-3,
            format!(
                "D = {:.4}, p = {:.3} on {} thinned draws",
                s.ks_statistic, s.ks_p_value, s.thinned
            ),
        ),
    ])
}

// ---------------------------------------------------------------------------
// Small statistics helpers

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `τ = b · Var(batch means) / Var(x)` with `√n` batches of `√n` draws.
pub fn batch_means_tau(xs: &[f64]) -> f64 {
    let b = (xs.len() as f64).sqrt().floor() as usize;
    if b < 2 {
        return 1.0;
    }
    let means: Vec<f64> = xs
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let (_, var_batch) = mean_var(&means);
    let (_, var) = mean_var(xs);
    (b as f64 * var_batch / var).max(1.0)
}

/// `sup_x |F_n(x) - F(x)|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample
/// correction.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

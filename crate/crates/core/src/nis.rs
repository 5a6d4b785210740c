//! Nonlinear importance sampling: the clipping transform, one population
//! Monte Carlo iteration, the full adaptive sampler and its estimators.
//!
//! Iteration `k` draws `M` parameter vectors from a Gaussian proposal fitted
//! to the previous population, weights each by `ℓ^N(y|θ) p_0(θ) / q_k(θ)`,
//! flattens the `M_c` largest weights to the `M_c`-th largest value and
//! normalizes. Without the flattening step (`Transform::Identity`) this is
//! plain population Monte Carlo.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{normalize_log_weights, weighted_mean_cov, MvNormal, RngStream};
use crate::target::{LogLikelihood, ParameterVector, Prior};

/// Nonlinear map applied to the raw importance weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transform {
    /// Flatten the `M_c` largest weights (NPMC).
    Clip,
    /// Use the raw weights (PMC).
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// `M`: samples per iteration.
    pub samples: usize,
    /// `K`: adaptation iterations after the prior-sampling step.
    pub iterations: usize,
    /// `M_c`: number of weights flattened by clipping.
    pub clip: usize,
    /// `N`: particles per likelihood estimate.
    pub particles: usize,
    pub transform: Transform,
}

/// Largest clipping parameter allowed for `m` samples, `⌊√m⌋`.
pub fn default_clip(m: usize) -> usize {
    let mut c = (m as f64).sqrt() as usize;
    while c * c > m {
        c -= 1;
    }
    while (c + 1) * (c + 1) <= m {
        c += 1;
    }
    c.max(1)
}

impl SamplerConfig {
    pub fn new(samples: usize, iterations: usize, particles: usize, transform: Transform) -> Self {
        SamplerConfig {
            samples,
            iterations,
            clip: default_clip(samples),
            particles,
            transform,
        }
    }

    pub fn npmc(samples: usize, iterations: usize, particles: usize) -> Self {
        Self::new(samples, iterations, particles, Transform::Clip)
    }

    pub fn pmc(samples: usize, iterations: usize, particles: usize) -> Self {
        Self::new(samples, iterations, particles, Transform::Identity)
    }

    pub fn with_clip(mut self, clip: usize) -> Self {
        self.clip = clip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::usage("M must be at least 1"));
        }
        if self.particles == 0 {
            return Err(Error::usage("N must be at least 1"));
        }
        if self.transform == Transform::Clip
            && (self.clip == 0 || self.clip.saturating_mul(self.clip) > self.samples)
        {
            return Err(Error::usage(format!(
                "M_c = {} outside [1, sqrt(M)] for M = {}",
                self.clip, self.samples
            )));
        }
        Ok(())
    }
}

/// Flattens the `m_c` largest log-weights to the `m_c`-th largest value.
///
/// Thresholding is by value: every weight at or above the threshold becomes
/// the threshold, so ties at the threshold are handled symmetrically.
pub fn clip_weights(raw_log_weights: &[f64], m_c: usize) -> Result<Vec<f64>> {
    if m_c == 0 || m_c > raw_log_weights.len() {
        return Err(Error::usage(format!(
            "M_c = {m_c} outside [1, {}]",
            raw_log_weights.len()
        )));
    }
    if raw_log_weights.iter().any(|v| v.is_nan()) {
        return Err(Error::usage("log-weights contain NaN"));
    }
    let mut scratch = raw_log_weights.to_vec();
    let (_, threshold, _) = scratch.select_nth_unstable_by(m_c - 1, |a, b| b.total_cmp(a));
    let threshold = *threshold;
    Ok(raw_log_weights.iter().map(|&w| w.min(threshold)).collect())
}

pub fn transform_weights(
    raw_log_weights: &[f64],
    transform: Transform,
    m_c: usize,
) -> Result<Vec<f64>> {
    match transform {
        Transform::Clip => clip_weights(raw_log_weights, m_c),
        Transform::Identity => Ok(raw_log_weights.to_vec()),
    }
}

/// `q_k = N(μ_k, Σ_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianProposal {
    pub mean: ParameterVector,
    pub covariance: DMatrix<f64>,
}

impl GaussianProposal {
    /// Weighted mean and covariance of a population.
    pub fn fit(cloud: &WeightedParameterCloud) -> Result<Self> {
        let (mean, covariance) = weighted_mean_cov(&cloud.samples, &cloud.normalized_weights)?;
        Ok(GaussianProposal { mean, covariance })
    }
}

/// Where an iteration draws its samples from.
#[derive(Clone, Debug)]
pub enum Proposal {
    /// Sample from `p_0`; weights are `ℓ^N` alone.
    Prior,
    Gaussian(GaussianProposal),
}

/// One iteration's weighted population.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedParameterCloud {
    pub samples: Vec<ParameterVector>,
    pub raw_log_weights: Vec<f64>,
    pub transformed_log_weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    pub iteration: usize,
}

impl WeightedParameterCloud {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// One row per sample: θ components, raw, transformed and normalized
    /// weight, iteration index.
    pub fn to_csv(&self, with_header: bool) -> String {
        let mut s = String::new();
        if with_header {
            let cols: Vec<String> = (1..=self.dim()).map(|i| format!("theta_{i}")).collect();
            writeln!(
                s,
                "{},raw_log_weight,transformed_log_weight,normalized_weight,iteration",
                cols.join(",")
            )
            .unwrap();
        }
        for i in 0..self.len() {
            for v in self.samples[i].iter() {
                write!(s, "{v},").unwrap();
            }
            writeln!(
                s,
                "{},{},{},{}",
                self.raw_log_weights[i],
                self.transformed_log_weights[i],
                self.normalized_weights[i],
                self.iteration
            )
            .unwrap();
        }
        s
    }
}

/// Draws, weights, transforms and normalizes one population.
///
/// Sample `i` of iteration `k` uses the substream `rng.split([k, i])` for both
/// its draw and its likelihood estimate, so the result does not depend on how
/// the `M` evaluations are scheduled across threads.
pub fn nis_iteration<P, L>(
    proposal: &Proposal,
    prior: &P,
    likelihood: &L,
    config: &SamplerConfig,
    iteration: usize,
    rng: &RngStream,
) -> Result<WeightedParameterCloud>
where
    P: Prior + ?Sized,
    L: LogLikelihood + ?Sized,
{
    config.validate()?;
    let q = match proposal {
        Proposal::Prior => None,
        Proposal::Gaussian(g) => Some(MvNormal::new(g.mean.clone(), &g.covariance)?),
    };
    let draws: Vec<(ParameterVector, f64)> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng.split(&[iteration as u64, i as u64]);
            let theta = match &q {
                None => prior.sample(&mut stream),
                Some(q) => q.sample(&mut stream),
            };
            let log_lik = likelihood.log_likelihood(&theta, &mut stream)?;
            let log_w = match &q {
                None => log_lik,
                Some(q) => {
                    let log_prior = prior.log_density(&theta);
                    if log_lik == f64::NEG_INFINITY || log_prior == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        log_lik + log_prior - q.log_pdf(&theta)
                    }
                }
            };
            if log_w.is_nan() || log_w == f64::INFINITY {
                return Err(Error::numerical(format!(
                    "importance weight {log_w} for θ = {theta:?}"
                )));
            }
            Ok((theta, log_w))
        })
        .collect::<Result<_>>()?;
    let (samples, raw_log_weights): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let transformed_log_weights =
        transform_weights(&raw_log_weights, config.transform, config.clip)?;
    let normalized_weights =
        normalize_log_weights(&transformed_log_weights).map_err(|e| e.at_iteration(iteration))?;
    Ok(WeightedParameterCloud {
        samples,
        raw_log_weights,
        transformed_log_weights,
        normalized_weights,
        iteration,
    })
}

/// Runs the prior-sampling step followed by `K` adaptive iterations and
/// returns all `K + 1` populations.
pub fn run_sampler<P, L>(
    prior: &P,
    likelihood: &L,
    config: &SamplerConfig,
    rng: &RngStream,
) -> Result<Vec<WeightedParameterCloud>>
where
    P: Prior + ?Sized,
    L: LogLikelihood + ?Sized,
{
    config.validate()?;
    let mut clouds = Vec::with_capacity(config.iterations + 1);
    clouds.push(nis_iteration(
        &Proposal::Prior,
        prior,
        likelihood,
        config,
        0,
        rng,
    )?);
    for k in 1..=config.iterations {
        let proposal = GaussianProposal::fit(clouds.last().expect("non-empty"))?;
        let cloud = nis_iteration(
            &Proposal::Gaussian(proposal),
            prior,
            likelihood,
            config,
            k,
            rng,
        )
        .map_err(|e| e.at_iteration(k))?;
        clouds.push(cloud);
    }
    Ok(clouds)
}

/// `Σ_i w^i θ^i`.
pub fn posterior_mean(cloud: &WeightedParameterCloud) -> ParameterVector {
    let mut mean = ParameterVector::zeros(cloud.dim());
    for (s, &w) in cloud.samples.iter().zip(&cloud.normalized_weights) {
        mean.axpy(w, s, 1.0);
    }
    mean
}

/// `Σ_i w^i ‖θ^i - θ̂‖²`, the posterior spread around the posterior mean.
pub fn posterior_mse_estimate(cloud: &WeightedParameterCloud) -> f64 {
    let mean = posterior_mean(cloud);
    cloud
        .samples
        .iter()
        .zip(&cloud.normalized_weights)
        .map(|(s, w)| w * (s - &mean).norm_squared())
        .sum()
}

/// `‖θ̂ - truth‖²`.
pub fn estimation_error(cloud: &WeightedParameterCloud, truth: &ParameterVector) -> Result<f64> {
    if cloud.dim() != truth.len() {
        return Err(Error::usage(format!(
            "cloud has dimension {}, truth has {}",
            cloud.dim(),
            truth.len()
        )));
    }
    Ok((posterior_mean(cloud) - truth).norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{ConjugateGaussian, ExactLikelihood, GaussianPrior};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;

    /// Literal transcription: sort indices by decreasing weight, read off the
    /// `M_c`-th, flatten everything at or above it.
    fn sort_oracle(raw: &[f64], m_c: usize) -> Vec<f64> {
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[b].partial_cmp(&raw[a]).unwrap().then(a.cmp(&b)));
        let t = raw[order[m_c - 1]];
        raw.iter().map(|&w| if w >= t { t } else { w }).collect()
    }

    fn cloud(samples: Vec<Vec<f64>>, weights: Vec<f64>) -> WeightedParameterCloud {
        let n = samples.len();
        WeightedParameterCloud {
            samples: samples.into_iter().map(DVector::from_vec).collect(),
            raw_log_weights: vec![0.0; n],
            transformed_log_weights: vec![0.0; n],
            normalized_weights: weights,
            iteration: 0,
        }
    }

    #[test]
    fn clip_examples() {
        let raw: Vec<f64> = [5.0f64, 4.0, 3.0, 2.0, 1.0]
            .iter()
            .map(|w| w.ln())
            .collect();
        let out = clip_weights(&raw, 2).unwrap();
        let lin: Vec<f64> = out.iter().map(|w| w.exp()).collect();
        for (a, b) in lin.iter().zip([4.0, 4.0, 3.0, 2.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(clip_weights(&raw, 1).unwrap(), raw);
        assert!(matches!(clip_weights(&raw, 0), Err(Error::Usage(_))));
        assert!(matches!(clip_weights(&raw, 6), Err(Error::Usage(_))));
    }

    #[test]
    fn clip_matches_sort_oracle() {
        let mut rng = RngStream::new(31, 0);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..200).map(|_| rng.gen_range(-50.0..5.0)).collect();
            assert_eq!(clip_weights(&raw, 14).unwrap(), sort_oracle(&raw, 14));
        }
    }

    #[test]
    fn clip_handles_zero_weights() {
        let raw = [f64::NEG_INFINITY, 0.0, -1.0, f64::NEG_INFINITY];
        assert_eq!(
            clip_weights(&raw, 2).unwrap(),
            vec![f64::NEG_INFINITY, -1.0, -1.0, f64::NEG_INFINITY]
        );
    }

    #[test]
    fn default_clip_is_floor_sqrt() {
        assert_eq!(default_clip(100), 10);
        assert_eq!(default_clip(200), 14);
        assert_eq!(default_clip(99), 9);
        assert_eq!(default_clip(1), 1);
        assert!(SamplerConfig::npmc(200, 1, 1)
            .with_clip(15)
            .validate()
            .is_err());
        assert!(SamplerConfig::npmc(200, 1, 1).validate().is_ok());
    }

    #[test]
    fn flat_weights_without_transform() {
        let prior = GaussianPrior::diagonal(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        let flat = ExactLikelihood(|_: &ParameterVector| -3.0);
        let config = SamplerConfig::pmc(64, 0, 1);
        let c = nis_iteration(
            &Proposal::Prior,
            &prior,
            &flat,
            &config,
            0,
            &RngStream::new(1, 0),
        )
        .unwrap();
        for w in &c.normalized_weights {
            assert_abs_diff_eq!(*w, 1.0 / 64.0, epsilon = 1e-15);
        }
        // q = p_0 at k > 0 gives the same flat weights.
        let q = GaussianProposal {
            mean: prior.mean().clone(),
            covariance: prior.covariance(),
        };
        let c = nis_iteration(
            &Proposal::Gaussian(q),
            &prior,
            &flat,
            &config,
            1,
            &RngStream::new(1, 0),
        )
        .unwrap();
        for w in &c.normalized_weights {
            assert_abs_diff_eq!(*w, 1.0 / 64.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn clipping_caps_normalized_weights() {
        let toy = ConjugateGaussian {
            prior_mean: 0.0,
            prior_var: 25.0,
            noise_var: 0.01,
            observations: vec![1.3],
        };
        let config = SamplerConfig::npmc(100, 0, 1);
        let c = nis_iteration(
            &Proposal::Prior,
            &toy.prior(),
            &toy.likelihood(),
            &config,
            0,
            &RngStream::new(2, 0),
        )
        .unwrap();
        let max = c.normalized_weights.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 0.1 + 1e-12, "max weight {max}");
    }

    #[test]
    fn conjugate_posterior_mean() {
        let toy = ConjugateGaussian {
            prior_mean: 0.0,
            prior_var: 1.0,
            noise_var: 0.5,
            observations: vec![0.8, 1.4, 0.2],
        };
        let (mean, var) = toy.posterior();
        let m = 10_000;
        let config = SamplerConfig::npmc(m, 0, 1);
        let c = nis_iteration(
            &Proposal::Prior,
            &toy.prior(),
            &toy.likelihood(),
            &config,
            0,
            &RngStream::new(3, 0),
        )
        .unwrap();
        let est = posterior_mean(&c)[0];
        let tol = 4.0 * var.sqrt() / (m as f64).sqrt() * 3.0;
        assert!((est - mean).abs() < tol, "{est} vs {mean} (tol {tol})");
    }

    #[test]
    fn sampler_shape_and_determinism() {
        let toy = ConjugateGaussian {
            prior_mean: 0.0,
            prior_var: 4.0,
            noise_var: 1.0,
            observations: vec![2.0, 2.5],
        };
        let config = SamplerConfig::npmc(50, 0, 1);
        let clouds = run_sampler(
            &toy.prior(),
            &toy.likelihood(),
            &config,
            &RngStream::new(4, 0),
        )
        .unwrap();
        assert_eq!(clouds.len(), 1);
        assert_eq!(clouds[0].iteration, 0);

        let config = SamplerConfig::npmc(50, 4, 1);
        let a = run_sampler(
            &toy.prior(),
            &toy.likelihood(),
            &config,
            &RngStream::new(4, 0),
        )
        .unwrap();
        let b = run_sampler(
            &toy.prior(),
            &toy.likelihood(),
            &config,
            &RngStream::new(4, 0),
        )
        .unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        assert_eq!(a[3].iteration, 3);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let toy = ConjugateGaussian {
            prior_mean: 0.0,
            prior_var: 4.0,
            noise_var: 1.0,
            observations: vec![2.0],
        };
        let config = SamplerConfig::npmc(300, 3, 1);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    run_sampler(
                        &toy.prior(),
                        &toy.likelihood(),
                        &config,
                        &RngStream::new(6, 0),
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn degenerate_weights_carry_iteration() {
        let prior = GaussianPrior::diagonal(&[0.0], &[1.0]).unwrap();
        let zero = ExactLikelihood(|_: &ParameterVector| f64::NEG_INFINITY);
        let err = run_sampler(
            &prior,
            &zero,
            &SamplerConfig::npmc(16, 2, 1),
            &RngStream::new(0, 0),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DegenerateWeights { iteration: Some(0) }
        ));

        // Zero likelihood everywhere except near the prior mean: the first
        // population survives, the refitted proposal misses.
        let picky = ExactLikelihood(
            |t: &ParameterVector| if t[0] < -0.5 { 0.0 } else { f64::NEG_INFINITY },
        );
        match run_sampler(
            &prior,
            &picky,
            &SamplerConfig::pmc(16, 3, 1),
            &RngStream::new(0, 0),
        ) {
            Ok(_) => {}
            Err(Error::DegenerateWeights { iteration }) => assert!(iteration.unwrap() >= 1),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn estimator_examples() {
        let single = cloud(vec![vec![1.5, -2.0]], vec![1.0]);
        assert_eq!(posterior_mean(&single), DVector::from_vec(vec![1.5, -2.0]));
        assert_eq!(posterior_mse_estimate(&single), 0.0);

        let pair = cloud(vec![vec![1.0, 2.0], vec![-1.0, -2.0]], vec![0.5, 0.5]);
        assert_eq!(posterior_mean(&pair), DVector::zeros(2));
        assert_abs_diff_eq!(posterior_mse_estimate(&pair), 5.0, epsilon = 1e-15);

        let c = cloud(vec![vec![2.0]], vec![1.0]);
        assert_eq!(
            estimation_error(&c, &DVector::from_vec(vec![3.0])).unwrap(),
            1.0
        );
        assert_eq!(
            estimation_error(&c, &DVector::from_vec(vec![2.0])).unwrap(),
            0.0
        );
        assert!(estimation_error(&c, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn estimators_match_oracles() {
        let mut rng = RngStream::new(12, 0);
        for _ in 0..20 {
            let n = 25;
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let c = cloud(pts.clone(), w.clone());

            let mut oracle_mean = [0.0; 3];
            for (p, wi) in pts.iter().zip(&w) {
                for d in 0..3 {
                    oracle_mean[d] += wi * p[d];
                }
            }
            let mean = posterior_mean(&c);
            for d in 0..3 {
                assert_abs_diff_eq!(mean[d], oracle_mean[d], epsilon = 1e-12);
            }
            let (_, cov) = weighted_mean_cov(&c.samples, &w).unwrap();
            assert_abs_diff_eq!(posterior_mse_estimate(&c), cov.trace(), epsilon = 1e-12);

            let truth: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let naive: f64 = (0..3).map(|d| (oracle_mean[d] - truth[d]).powi(2)).sum();
            assert_abs_diff_eq!(
                estimation_error(&c, &DVector::from_vec(truth)).unwrap(),
                naive,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cloud_csv_layout() {
        let c = cloud(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.25, 0.75]);
        let text = c.to_csv(true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "theta_1,theta_2,raw_log_weight,transformed_log_weight,normalized_weight,iteration"
        );
        assert_eq!(lines[2], "3,4,0,0,0.75,0");
    }

    proptest! {
        #[test]
        fn clipping_invariants(
            raw in prop::collection::vec(prop_oneof![9 => -100.0f64..10.0, 1 => Just(f64::NEG_INFINITY)], 1..120),
            frac in 0.0f64..1.0,
            perm_seed in any::<u64>(),
        ) {
            let m = raw.len();
            let m_c = 1 + ((frac * default_clip(m) as f64) as usize).min(default_clip(m) - 1);
            let out = clip_weights(&raw, m_c).unwrap();
            prop_assert_eq!(&out, &sort_oracle(&raw, m_c));
            prop_assert_eq!(&clip_weights(&out, m_c).unwrap(), &out);
            let t = sort_oracle(&raw, m_c).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (o, r) in out.iter().zip(&raw) {
                prop_assert!(o <= r);
                if *r < t {
                    prop_assert_eq!(o, r);
                }
            }
            if out.iter().any(|w| w.is_finite()) {
                let w = normalize_log_weights(&out).unwrap();
                prop_assert!(w.iter().all(|&p| p <= 1.0 / m_c as f64 + 1e-12));
            }
            let mut order: Vec<usize> = (0..m).collect();
            let mut prng = RngStream::new(perm_seed, 0);
            for i in (1..m).rev() {
                order.swap(i, prng.gen_range(0..=i));
            }
            let permuted: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
            let out_perm = clip_weights(&permuted, m_c).unwrap();
            for (k, &i) in order.iter().enumerate() {
                prop_assert_eq!(out_perm[k], out[i]);
            }
        }
    }
}

//! Bootstrap particle filter and its unbiased likelihood estimator.
//!
//! Each step propagates every particle through the transition kernel,
//! weights it by the observation density, adds `ln((1/N) Σ_i ũ_n^i)` to the
//! running log-likelihood and then resamples multinomially. The product of
//! the per-step averages is an unbiased estimate of `ℓ(y|θ)`, which is what
//! lets the samplers built on top of it remain exact.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{draw_from_cumulative, log_sum_exp_unchecked, LogWeight, RngStream};
use crate::ssm::StateSpaceModel;
use crate::target::{LogLikelihood, ParameterVector};

/// The weighted particle cloud of one filter step, before resampling.
#[derive(Clone, Debug)]
pub struct ParticleSet<S> {
    pub particles: Vec<S>,
    pub normalized_weights: Vec<f64>,
    pub time_index: usize,
}

/// `ln ℓ^N(y|θ)` together with the settings that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodEstimate {
    pub log_value: LogWeight,
    pub particle_count: usize,
    pub horizon: usize,
}

/// A bootstrap filter advanced one observation at a time.
pub struct BootstrapFilter<'m, M: StateSpaceModel> {
    model: &'m M,
    theta: Vec<f64>,
    weighted: ParticleSet<M::State>,
    resampled: Vec<M::State>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    ancestors: Vec<usize>,
    log_likelihood: f64,
}

impl<'m, M: StateSpaceModel> BootstrapFilter<'m, M> {
    /// Draws `n` particles from the initial distribution.
    pub fn new<R: Rng + ?Sized>(
        model: &'m M,
        theta: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("particle count must be at least 1"));
        }
        let resampled: Vec<M::State> = (0..n).map(|_| model.sample_initial(theta, rng)).collect();
        Ok(BootstrapFilter {
            model,
            theta: theta.to_vec(),
            weighted: ParticleSet {
                particles: Vec::with_capacity(n),
                normalized_weights: vec![1.0 / n as f64; n],
                time_index: 0,
            },
            resampled,
            log_weights: vec![0.0; n],
            cumulative: vec![0.0; n],
            ancestors: Vec::with_capacity(n),
            log_likelihood: 0.0,
        })
    }

    pub fn particle_count(&self) -> usize {
        self.resampled.len()
    }

    /// Log-likelihood of the observations processed so far.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Propagated particles of the last step with their normalized weights.
    pub fn weighted(&self) -> &ParticleSet<M::State> {
        &self.weighted
    }

    /// Equally weighted particles after the last resampling.
    pub fn resampled(&self) -> &[M::State] {
        &self.resampled
    }

    /// Assimilates `y` and returns the log-likelihood increment.
    ///
    /// If every particle has zero weight the increment is `-inf`, the running
    /// log-likelihood becomes `-inf` and the particles are left unresampled.
    pub fn step<R: Rng + ?Sized>(&mut self, y: &[f64], rng: &mut R) -> Result<f64> {
        let n = self.particle_count();
        let step = self.weighted.time_index + 1;
        self.weighted.time_index = step;
        self.weighted.particles.clear();
        for x in &self.resampled {
            self.weighted.particles.push(self.model.sample_transition(
                x,
                step,
                &self.theta,
                rng,
            )?);
        }
        for (lw, x) in self.log_weights.iter_mut().zip(&self.weighted.particles) {
            *lw = self.model.observation_log_lik(y, x, step, &self.theta);
        }
        let total = log_sum_exp_unchecked(&self.log_weights);
        if total == f64::NEG_INFINITY {
            self.log_likelihood = f64::NEG_INFINITY;
            return Ok(f64::NEG_INFINITY);
        }
        if !total.is_finite() {
            return Err(Error::numerical(format!(
                "observation log-likelihoods at step {step} sum to {total}"
            )));
        }
        let increment = total - (n as f64).ln();
        self.log_likelihood += increment;

        let mut acc = 0.0;
        for ((w, c), &lw) in self
            .weighted
            .normalized_weights
            .iter_mut()
            .zip(self.cumulative.iter_mut())
            .zip(&self.log_weights)
        {
            *w = (lw - total).exp();
            acc += *w;
            *c = acc;
        }
        draw_from_cumulative(&self.cumulative, n, rng, &mut self.ancestors);
        for (slot, &a) in self.resampled.iter_mut().zip(&self.ancestors) {
            *slot = self.weighted.particles[a].clone();
        }
        Ok(increment)
    }
}

fn check_inputs(observations: &[Vec<f64>], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::usage("particle count must be at least 1"));
    }
    if observations.is_empty() {
        return Err(Error::usage("observation sequence is empty"));
    }
    Ok(())
}

/// Runs a bootstrap filter with `n` particles over all observations and
/// returns the log of the unbiased likelihood estimate.
///
/// A run in which every particle receives zero weight at some step returns
/// `-inf`; it is not retried.
pub fn run_bootstrap_filter<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &[f64],
    observations: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<LikelihoodEstimate> {
    check_inputs(observations, n)?;
    let mut filter = BootstrapFilter::new(model, theta, n, rng)?;
    for y in observations {
        if filter.step(y, rng)? == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(LikelihoodEstimate {
        log_value: LogWeight::new(filter.log_likelihood())?,
        particle_count: n,
        horizon: observations.len(),
    })
}

/// Per-step mean of the resampled particles, `(1/N) Σ_i x_n^i`.
pub fn filter_posterior_mean<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &[f64],
    observations: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    check_inputs(observations, n)?;
    let mut filter = BootstrapFilter::new(model, theta, n, rng)?;
    let mut means = Vec::with_capacity(observations.len());
    for y in observations {
        if filter.step(y, rng)? == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights { iteration: None });
        }
        let mut mean = DVector::zeros(model.state_dim());
        for x in filter.resampled() {
            mean += model.state_vector(x);
        }
        means.push(mean / n as f64);
    }
    Ok(means)
}

/// `ln ℓ^N(y|θ)` from a fresh bootstrap filter per evaluation.
pub struct ParticleFilterLikelihood<'a, M> {
    pub model: &'a M,
    pub observations: &'a [Vec<f64>],
    pub particles: usize,
}

impl<'a, M> ParticleFilterLikelihood<'a, M> {
    pub fn new(model: &'a M, observations: &'a [Vec<f64>], particles: usize) -> Self {
        ParticleFilterLikelihood {
            model,
            observations,
            particles,
        }
    }
}

impl<M: StateSpaceModel> LogLikelihood for ParticleFilterLikelihood<'_, M> {
    fn log_likelihood(&self, theta: &ParameterVector, rng: &mut RngStream) -> Result<f64> {
        let est = run_bootstrap_filter(
            self.model,
            theta.as_slice(),
            self.observations,
            self.particles,
            rng,
        )?;
        Ok(est.log_value.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::simulate_dataset;
    use crate::ssm::{kalman_log_likelihood, LinearGaussianModel, TrackingModel, TrackingParams};
    use approx::assert_abs_diff_eq;

    /// x_n = x_{n-1} + 1 exactly; constant or Gaussian observation density.
    struct Counter {
        flat: Option<f64>,
    }

    impl StateSpaceModel for Counter {
        type State = f64;
        fn state_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn sample_initial<R: Rng + ?Sized>(&self, _: &[f64], _: &mut R) -> f64 {
            0.0
        }
        fn sample_transition<R: Rng + ?Sized>(
            &self,
            prev: &f64,
            _: usize,
            _: &[f64],
            _: &mut R,
        ) -> Result<f64> {
            Ok(prev + 1.0)
        }
        fn observation_log_lik(&self, y: &[f64], x: &f64, _: usize, _: &[f64]) -> f64 {
            match self.flat {
                Some(c) => c.ln(),
                None => -0.5 * (y[0] - x).powi(2),
            }
        }
        fn state_vector(&self, x: &f64) -> DVector<f64> {
            DVector::from_element(1, *x)
        }
    }

    fn lg_model() -> LinearGaussianModel {
        LinearGaussianModel::scalar(0.9, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn lg_data(model: &LinearGaussianModel, horizon: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 99);
        let mut x = model.sample_initial(&[], &mut rng);
        (1..=horizon)
            .map(|n| {
                x = model.sample_transition(&x, n, &[], &mut rng).unwrap();
                vec![x[0] + crate::numerics::standard_normal(&mut rng)]
            })
            .collect()
    }

    #[test]
    fn constant_likelihood_is_exact() {
        let model = Counter { flat: Some(0.37) };
        for (seed, n) in [(1, 1), (2, 10), (3, 333)] {
            let est =
                run_bootstrap_filter(&model, &[], &[vec![5.0]], n, &mut RngStream::new(seed, 0))
                    .unwrap();
            assert_abs_diff_eq!(est.log_value.value(), 0.37f64.ln(), epsilon = 1e-14);
            assert_eq!(est.particle_count, n);
            assert_eq!(est.horizon, 1);
        }
    }

    #[test]
    fn single_particle_is_finite_and_reproducible() {
        let model = lg_model();
        let ys = lg_data(&model, 20, 4);
        let a = run_bootstrap_filter(&model, &[], &ys, 1, &mut RngStream::new(8, 0)).unwrap();
        let b = run_bootstrap_filter(&model, &[], &ys, 1, &mut RngStream::new(8, 0)).unwrap();
        assert!(a.log_value.value().is_finite());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_inputs() {
        let model = lg_model();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            run_bootstrap_filter(&model, &[], &[], 10, &mut rng),
            Err(Error::Usage(_))
        ));
        assert!(run_bootstrap_filter(&model, &[], &[vec![0.0]], 0, &mut rng).is_err());
    }

    #[test]
    fn zero_weight_collapse_reports_neg_infinity() {
        let model = Counter { flat: Some(0.0) };
        let est = run_bootstrap_filter(
            &model,
            &[],
            &[vec![0.0], vec![0.0]],
            5,
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        assert!(est.log_value.is_zero());
    }

    #[test]
    fn deterministic_model_mean_is_the_trajectory() {
        let model = Counter { flat: None };
        let ys: Vec<Vec<f64>> = (1..=6).map(|n| vec![n as f64 + 0.3]).collect();
        let means = filter_posterior_mean(&model, &[], &ys, 64, &mut RngStream::new(2, 0)).unwrap();
        for (n, m) in means.iter().enumerate() {
            assert_eq!(m[0], (n + 1) as f64);
        }
    }

    #[test]
    fn filter_mean_tracks_kalman() {
        let model = lg_model();
        let ys = lg_data(&model, 30, 12);
        let means =
            filter_posterior_mean(&model, &[], &ys, 10_000, &mut RngStream::new(5, 0)).unwrap();
        // Kalman filtering means and variances for the scalar model.
        let (mut m, mut p) = (0.0, 1.0);
        let mut within = 0;
        for (y, est) in ys.iter().zip(&means) {
            m *= 0.9;
            p = 0.81 * p + 1.0;
            let k = p / (p + 1.0);
            m += k * (y[0] - m);
            p *= 1.0 - k;
            if (est[0] - m).abs() <= 3.0 * p.sqrt() {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.95 * ys.len() as f64);
        let again =
            filter_posterior_mean(&model, &[], &ys, 10_000, &mut RngStream::new(5, 0)).unwrap();
        assert_eq!(means, again);
    }

    #[test]
    fn unbiased_against_kalman_small() {
        let model = lg_model();
        let ys = lg_data(&model, 10, 1);
        let exact = kalman_log_likelihood(&model, &[], &ys).unwrap();
        let reps = 400;
        let root = RngStream::new(77, 0);
        let ratios: Vec<f64> = (0..reps)
            .map(|r| {
                let est =
                    run_bootstrap_filter(&model, &[], &ys, 50, &mut root.split(&[r])).unwrap();
                (est.log_value.value() - exact).exp()
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / reps as f64;
        let sd =
            (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - 1.0).abs() <= 4.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn resampled_particles_come_from_the_propagated_cloud() {
        let model = TrackingModel::default();
        let truth = TrackingParams::ground_truth();
        let data = simulate_dataset(&model, &truth, 10, &mut RngStream::new(3, 0)).unwrap();
        let theta = truth.to_theta();
        let mut rng = RngStream::new(4, 0);
        let mut filter = BootstrapFilter::new(&model, theta.as_slice(), 200, &mut rng).unwrap();
        for y in &data.observations {
            filter.step(y, &mut rng).unwrap();
            let set = filter.weighted();
            assert_abs_diff_eq!(
                set.normalized_weights.iter().sum::<f64>(),
                1.0,
                epsilon = 1e-9
            );
            assert_eq!(set.particles.len(), 200);
            for x in filter.resampled() {
                assert!(set.particles.contains(x));
            }
        }
    }

    #[test]
    fn tracking_estimate_respects_density_bound() {
        let model = TrackingModel::default();
        let truth = TrackingParams::ground_truth();
        let data = simulate_dataset(&model, &truth, 20, &mut RngStream::new(6, 0)).unwrap();
        // Each sensor density is at most 1/sqrt(2π σ²).
        let bound = 20.0 * 16.0 * (-0.5 * crate::numerics::LN_2PI);
        for seed in 0..5 {
            let est = run_bootstrap_filter(
                &model,
                truth.to_theta().as_slice(),
                &data.observations,
                100,
                &mut RngStream::new(seed, 1),
            )
            .unwrap();
            assert!(est.log_value.value() <= bound + 1e-9);
        }
    }
}

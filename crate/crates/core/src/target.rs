//! Parameter priors and likelihood evaluators: the two ingredients of the
//! posterior `p(θ|y) ∝ ℓ(y|θ) p_0(θ)` that the samplers target.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{MvNormal, RngStream};

pub type ParameterVector = DVector<f64>;

/// Prior density `p_0(θ)` over the parameter space.
pub trait Prior: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut RngStream) -> ParameterVector;

    /// `ln p_0(θ)`; `-inf` outside the support.
    fn log_density(&self, theta: &ParameterVector) -> f64;
}

/// Something that returns `ln ℓ(y|θ)` or an unbiased estimate of `ℓ(y|θ)` in
/// log form. Estimators draw their randomness from `rng` only.
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, theta: &ParameterVector, rng: &mut RngStream) -> Result<f64>;
}

impl<L: LogLikelihood + ?Sized> LogLikelihood for &L {
    fn log_likelihood(&self, theta: &ParameterVector, rng: &mut RngStream) -> Result<f64> {
        (**self).log_likelihood(theta, rng)
    }
}

/// Gaussian prior `N(mean, covariance)`.
#[derive(Clone, Debug)]
pub struct GaussianPrior {
    dist: MvNormal,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        Ok(GaussianPrior {
            dist: MvNormal::new(mean, covariance)?,
        })
    }

    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::usage("prior mean and variances differ in length"));
        }
        Self::new(
            DVector::from_column_slice(mean),
            &DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        )
    }

    /// `ln P_t ~ N(-0.11, 0.22)`, `ν ~ N(0, 4)`, `ln ρ ~ N(-11.02, 0.4)`.
    pub fn tracking() -> Self {
        Self::diagonal(&[-0.11, 0.0, -11.02], &[0.22, 4.0, 0.4]).expect("valid prior")
    }

    pub fn mean(&self) -> &DVector<f64> {
        self.dist.mean()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.dist.covariance()
    }
}

impl Prior for GaussianPrior {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn sample(&self, rng: &mut RngStream) -> ParameterVector {
        self.dist.sample(rng)
    }

    fn log_density(&self, theta: &ParameterVector) -> f64 {
        self.dist.log_pdf(theta)
    }
}

/// Uniform prior on an axis-aligned box.
#[derive(Clone, Debug)]
pub struct UniformBoxPrior {
    lower: Vec<f64>,
    upper: Vec<f64>,
    log_volume: f64,
}

impl UniformBoxPrior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::usage(
                "box bounds must be non-empty and equally long",
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::usage("box lower bounds must be below upper bounds"));
        }
        let log_volume = lower.iter().zip(&upper).map(|(l, u)| (u - l).ln()).sum();
        Ok(UniformBoxPrior {
            lower,
            upper,
            log_volume,
        })
    }
}

impl Prior for UniformBoxPrior {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample(&self, rng: &mut RngStream) -> ParameterVector {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| l + rng.gen::<f64>() * (u - l)),
        )
    }

    fn log_density(&self, theta: &ParameterVector) -> f64 {
        let inside = theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (l, u))| t >= l && t <= u);
        if inside {
            -self.log_volume
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// A closed-form log-likelihood.
pub struct ExactLikelihood<F>(pub F);

impl<F> LogLikelihood for ExactLikelihood<F>
where
    F: Fn(&ParameterVector) -> f64 + Sync,
{
    fn log_likelihood(&self, theta: &ParameterVector, _rng: &mut RngStream) -> Result<f64> {
        Ok((self.0)(theta))
    }
}

/// Wraps a likelihood and counts how many times it is evaluated.
pub struct CountingLikelihood<L> {
    inner: L,
    calls: AtomicUsize,
}

impl<L> CountingLikelihood<L> {
    pub fn new(inner: L) -> Self {
        CountingLikelihood {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<L: LogLikelihood> LogLikelihood for CountingLikelihood<L> {
    fn log_likelihood(&self, theta: &ParameterVector, rng: &mut RngStream) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.log_likelihood(theta, rng)
    }
}

/// One-parameter conjugate model: `θ ~ N(m, s²)`, `y_i | θ ~ N(θ, σ²)`.
///
/// Used by tests and examples that need a posterior in closed form.
#[derive(Clone, Debug)]
pub struct ConjugateGaussian {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub noise_var: f64,
    pub observations: Vec<f64>,
}

impl ConjugateGaussian {
    pub fn prior(&self) -> GaussianPrior {
        GaussianPrior::diagonal(&[self.prior_mean], &[self.prior_var]).expect("positive variance")
    }

    pub fn log_likelihood_at(&self, theta: f64) -> f64 {
        self.observations
            .iter()
            .map(|y| crate::numerics::normal_log_pdf(*y, theta, self.noise_var))
            .sum()
    }

    pub fn likelihood(&self) -> ExactLikelihood<impl Fn(&ParameterVector) -> f64 + Sync + '_> {
        ExactLikelihood(move |t: &ParameterVector| self.log_likelihood_at(t[0]))
    }

    /// Posterior mean and variance.
    pub fn posterior(&self) -> (f64, f64) {
        let n = self.observations.len() as f64;
        let sum: f64 = self.observations.iter().sum();
        let precision = 1.0 / self.prior_var + n / self.noise_var;
        let var = 1.0 / precision;
        (
            var * (self.prior_mean / self.prior_var + sum / self.noise_var),
            var,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_prior_support() {
        let p = UniformBoxPrior::new(vec![-1.0, 0.0], vec![1.0, 4.0]).unwrap();
        assert_abs_diff_eq!(
            p.log_density(&DVector::from_vec(vec![0.0, 1.0])),
            -(8f64.ln())
        );
        assert_eq!(
            p.log_density(&DVector::from_vec(vec![2.0, 1.0])),
            f64::NEG_INFINITY
        );
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            assert!(p.log_density(&p.sample(&mut rng)).is_finite());
        }
    }

    #[test]
    fn conjugate_posterior_matches_grid_quadrature() {
        let toy = ConjugateGaussian {
            prior_mean: 0.5,
            prior_var: 2.0,
            noise_var: 1.5,
            observations: vec![1.0, 2.5, 0.3],
        };
        let prior = toy.prior();
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let h = 1e-3;
        for i in -20_000..20_000 {
            let t = i as f64 * h;
            let w =
                (toy.log_likelihood_at(t) + prior.log_density(&DVector::from_element(1, t))).exp();
            z += w;
            m1 += w * t;
            m2 += w * t * t;
        }
        let (mean, var) = toy.posterior();
        assert_abs_diff_eq!(m1 / z, mean, epsilon = 1e-8);
        assert_abs_diff_eq!(m2 / z - (m1 / z).powi(2), var, epsilon = 1e-8);
    }

    #[test]
    fn counting_wrapper_counts() {
        let l = CountingLikelihood::new(ExactLikelihood(|_: &ParameterVector| 0.0));
        let mut rng = RngStream::new(0, 0);
        for _ in 0..5 {
            l.log_likelihood(&DVector::zeros(1), &mut rng).unwrap();
        }
        assert_eq!(l.calls(), 5);
    }
}

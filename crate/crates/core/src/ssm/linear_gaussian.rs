//! Linear-Gaussian state-space model and its exact Kalman-filter likelihood.
//!
//! ```text
//! x_0 ~ N(m_0, P_0)
//! x_n = A x_{n-1} + B θ + q_n,   q_n ~ N(0, Q)
//! y_n = H x_n + w_n,             w_n ~ N(0, W)
//! ```
//!
//! The control matrix `B` lets `θ` enter the dynamics as a known input, so the
//! model doubles as a parameter-estimation problem with an exact likelihood.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::numerics::{regularized_cholesky, standard_normal, MvNormal};

#[derive(Clone, Debug)]
pub struct LinearGaussianModel {
    transition: DMatrix<f64>,
    transition_cov: DMatrix<f64>,
    observation: DMatrix<f64>,
    observation_cov: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    control: DMatrix<f64>,
    transition_factor: DMatrix<f64>,
    prior_factor: DMatrix<f64>,
    obs_noise: MvNormal,
}

/// Cholesky factor that also accepts an exactly-zero matrix (deterministic noise).
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    Ok(regularized_cholesky(m)?.0)
}

impl LinearGaussianModel {
    /// `Q` and `P_0` may be singular (e.g. zero for a static state); `W` must
    /// be positive definite.
    pub fn new(
        transition: DMatrix<f64>,
        transition_cov: DMatrix<f64>,
        observation: DMatrix<f64>,
        observation_cov: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let dx = prior_mean.len();
        let dy = observation.nrows();
        let shapes = [
            ("A", &transition, (dx, dx)),
            ("Q", &transition_cov, (dx, dx)),
            ("H", &observation, (dy, dx)),
            ("W", &observation_cov, (dy, dy)),
            ("P0", &prior_cov, (dx, dx)),
        ];
        for (name, m, shape) in shapes {
            if m.shape() != shape {
                return Err(Error::usage(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        let transition_factor = psd_factor(&transition_cov)?;
        let prior_factor = psd_factor(&prior_cov)?;
        if observation_cov.clone().cholesky().is_none() {
            return Err(Error::usage(
                "observation covariance must be positive definite",
            ));
        }
        let obs_noise = MvNormal::new(DVector::zeros(dy), &observation_cov)?;
        Ok(LinearGaussianModel {
            transition,
            transition_cov,
            observation,
            observation_cov,
            prior_mean,
            prior_cov,
            control: DMatrix::zeros(dx, 0),
            transition_factor,
            prior_factor,
            obs_noise,
        })
    }

    /// One-dimensional state and observation.
    pub fn scalar(a: f64, q: f64, h: f64, w: f64, m0: f64, p0: f64) -> Result<Self> {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(q), s(h), s(w), DVector::from_element(1, m0), s(p0))
    }

    /// Sets `B`, making `θ` (of length `B.ncols()`) an additive input to the dynamics.
    pub fn with_control(mut self, control: DMatrix<f64>) -> Result<Self> {
        if control.nrows() != self.state_dim() {
            return Err(Error::usage("control matrix must have d_x rows"));
        }
        self.control = control;
        Ok(self)
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn transition_cov(&self) -> &DMatrix<f64> {
        &self.transition_cov
    }

    pub fn observation(&self) -> &DMatrix<f64> {
        &self.observation
    }

    pub fn observation_cov(&self) -> &DMatrix<f64> {
        &self.observation_cov
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn control(&self) -> &DMatrix<f64> {
        &self.control
    }

    fn drift(&self, theta: &[f64]) -> Result<Option<DVector<f64>>> {
        if self.control.ncols() == 0 {
            return Ok(None);
        }
        if theta.len() != self.control.ncols() {
            return Err(Error::usage(format!(
                "θ has {} components, control expects {}",
                theta.len(),
                self.control.ncols()
            )));
        }
        Ok(Some(&self.control * DVector::from_column_slice(theta)))
    }

    fn check_observations(&self, observations: &[Vec<f64>]) -> Result<()> {
        match observations.iter().position(|y| y.len() != self.obs_dim()) {
            Some(n) => Err(Error::usage(format!(
                "observation {n} has dimension {}, expected {}",
                observations[n].len(),
                self.obs_dim()
            ))),
            None => Ok(()),
        }
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type State = DVector<f64>;

    fn state_dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.state_dim(), |_, _| standard_normal(rng));
        &self.prior_mean + &self.prior_factor * z
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        prev: &DVector<f64>,
        _step: usize,
        theta: &[f64],
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let z = DVector::from_fn(self.state_dim(), |_, _| standard_normal(rng));
        let mut next = &self.transition * prev + &self.transition_factor * z;
        if let Some(drift) = self.drift(theta)? {
            next += drift;
        }
        Ok(next)
    }

    fn observation_log_lik(
        &self,
        y: &[f64],
        state: &DVector<f64>,
        _step: usize,
        _theta: &[f64],
    ) -> f64 {
        let residual = DVector::from_column_slice(y) - &self.observation * state;
        self.obs_noise.log_pdf(&residual)
    }

    fn state_vector(&self, state: &DVector<f64>) -> DVector<f64> {
        state.clone()
    }
}

/// Exact `ln p(y_{1:n} | θ)` by the Kalman predict/update recursion.
///
/// Returns 0 for an empty observation sequence.
pub fn kalman_log_likelihood(
    model: &LinearGaussianModel,
    theta: &[f64],
    observations: &[Vec<f64>],
) -> Result<f64> {
    model.check_observations(observations)?;
    let drift = model.drift(theta)?;
    let dx = model.state_dim();
    let a = &model.transition;
    let h = &model.observation;
    let mut mean = model.prior_mean.clone();
    let mut cov = model.prior_cov.clone();
    let mut total = 0.0;
    for y in observations {
        mean = a * &mean;
        if let Some(d) = &drift {
            mean += d;
        }
        cov = a * &cov * a.transpose() + &model.transition_cov;

        let innovation_cov = h * &cov * h.transpose() + &model.observation_cov;
        let innovation_cov = (&innovation_cov + innovation_cov.transpose()) * 0.5;
        let chol = innovation_cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("innovation covariance is not positive definite"))?;
        let innovation = DVector::from_column_slice(y) - h * &mean;
        let z = chol
            .l()
            .solve_lower_triangular(&innovation)
            .expect("positive diagonal");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        total += -0.5 * (y.len() as f64 * crate::numerics::LN_2PI + log_det + z.norm_squared());

        let gain = &cov * h.transpose() * chol.inverse();
        mean += &gain * innovation;
        // Joseph form keeps the covariance symmetric PSD.
        let ikh = DMatrix::identity(dx, dx) - &gain * h;
        cov = &ikh * &cov * ikh.transpose() + &gain * &model.observation_cov * gain.transpose();
    }
    Ok(total)
}

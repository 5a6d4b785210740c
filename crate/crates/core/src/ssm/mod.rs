//! State-space models: the generic interface consumed by the particle filter,
//! the bounded-region RSSI tracking model and a linear-Gaussian test model
//! with an exact Kalman likelihood.

mod dataset;
mod linear_gaussian;
mod reflection;
mod tracking;

pub use dataset::Dataset;
pub use linear_gaussian::{kalman_log_likelihood, LinearGaussianModel};
pub use reflection::{exit_wall, reflect, Region, Wall, MAX_REFLECTIONS};
pub use tracking::{
    simulate_dataset, simulate_from, SensorGrid, SimulatedDataset, TrackingConstants,
    TrackingModel, TrackingParams, TrackingState, DISTANCE_FLOOR,
};

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;

/// A Markov state-space model `x_0 ~ K_0`, `x_n ~ K_θ(·|x_{n-1})`,
/// `y_n ~ l_θ(·|x_n)`, parameterized by a real vector `θ`.
///
/// Implementations must be immutable once built; a single model is shared by
/// every concurrent filter run.
pub trait StateSpaceModel: Sync {
    type State: Clone + Send;

    fn state_dim(&self) -> usize;

    fn obs_dim(&self) -> usize;

    /// Draws `x_0` from the initial distribution.
    fn sample_initial<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Self::State;

    /// Draws `x_n` given `x_{n-1}`. `step` is `n` (starting at 1).
    fn sample_transition<R: Rng + ?Sized>(
        &self,
        prev: &Self::State,
        step: usize,
        theta: &[f64],
        rng: &mut R,
    ) -> Result<Self::State>;

    /// `ln l_θ(y_n | x_n)`.
    fn observation_log_lik(
        &self,
        y: &[f64],
        state: &Self::State,
        step: usize,
        theta: &[f64],
    ) -> f64;

    /// Flattens a state for diagnostics such as filter means.
    fn state_vector(&self, state: &Self::State) -> DVector<f64>;
}

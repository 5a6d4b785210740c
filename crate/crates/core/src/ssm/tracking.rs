//! Target moving in a bounded rectangle, observed through received signal
//! strength (in dB) at a set of fixed sensors.
//!
//! State `x_n = [r_n; v_n]` with position `r_n` and velocity `v_n`. The
//! unknown parameters are `θ = [ln P_t, ν, ln ρ]`: transmit power, path-loss
//! exponent and sensor sensitivity.

use std::f64::consts::LN_10;

use nalgebra::DVector;
use rand::Rng;

use super::reflection::{reflect, Region};
use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, standard_normal, LN_2PI};

/// Smallest target-to-sensor distance used in the path-loss term.
pub const DISTANCE_FLOOR: f64 = 1e-6;

const DB_PER_NEPER: f64 = 10.0 / LN_10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// The three unknowns of the tracking model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingParams {
    pub log_pt: f64,
    pub nu: f64,
    pub log_rho: f64,
}

impl TrackingParams {
    /// `P_t = 0.8`, `ν = 3`, `ρ = 1e-5`.
    pub fn ground_truth() -> Self {
        TrackingParams {
            log_pt: 0.8f64.ln(),
            nu: 3.0,
            log_rho: 1e-5f64.ln(),
        }
    }

    pub fn from_theta(theta: &[f64]) -> Result<Self> {
        match *theta {
            [log_pt, nu, log_rho] => Ok(TrackingParams {
                log_pt,
                nu,
                log_rho,
            }),
            _ => Err(Error::usage(format!(
                "tracking parameters need 3 components, got {}",
                theta.len()
            ))),
        }
    }

    pub fn to_theta(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.log_pt, self.nu, self.log_rho])
    }
}

/// Known constants of the dynamics and the sensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingConstants {
    /// Time-discretization step.
    pub kappa: f64,
    /// Velocity noise variance.
    pub sigma_u2: f64,
    /// Extra position noise variance.
    pub sigma_z2: f64,
    /// Observation noise variance (dB²).
    pub sigma_eps2: f64,
}

impl Default for TrackingConstants {
    fn default() -> Self {
        TrackingConstants {
            kappa: 1.0,
            sigma_u2: 1e-2,
            sigma_z2: 1e-2,
            sigma_eps2: 1.0,
        }
    }
}

/// Sensor coordinates, all strictly inside the monitored region.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorGrid {
    positions: Vec<[f64; 2]>,
}

impl SensorGrid {
    pub fn new(positions: Vec<[f64; 2]>, region: &Region) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::usage("sensor grid is empty"));
        }
        if let Some(p) = positions.iter().find(|p| !region.strictly_contains(**p)) {
            return Err(Error::usage(format!(
                "sensor at {p:?} is not strictly inside the region"
            )));
        }
        Ok(SensorGrid { positions })
    }

    /// A `cols × rows` lattice with one sensor at the centre of each cell.
    pub fn uniform(region: &Region, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::usage(
                "sensor lattice needs at least one row and column",
            ));
        }
        let dx = region.width() / cols as f64;
        let dy = region.height() / rows as f64;
        let mut positions = Vec::with_capacity(cols * rows);
        for i in 0..cols {
            for j in 0..rows {
                positions.push([
                    region.x_min + (i as f64 + 0.5) * dx,
                    region.y_min + (j as f64 + 0.5) * dy,
                ]);
            }
        }
        SensorGrid::new(positions, region)
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl Default for SensorGrid {
    /// 16 sensors on a 4×4 lattice: x ∈ {±5, ±15}, y ∈ {±2.5, ±7.5}.
    fn default() -> Self {
        SensorGrid::uniform(&Region::default(), 4, 4).expect("default lattice is valid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingModel {
    pub region: Region,
    pub sensors: SensorGrid,
    pub constants: TrackingConstants,
}

impl Default for TrackingModel {
    fn default() -> Self {
        TrackingModel {
            region: Region::default(),
            sensors: SensorGrid::default(),
            constants: TrackingConstants::default(),
        }
    }
}

impl TrackingModel {
    pub fn new(region: Region, sensors: SensorGrid, constants: TrackingConstants) -> Self {
        TrackingModel {
            region,
            sensors,
            constants,
        }
    }

    /// Position uniform on the region, velocity `N(0, I/20)`.
    pub fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrackingState {
        let r = &self.region;
        let sd = (1.0f64 / 20.0).sqrt();
        let position = [
            r.x_min + rng.gen::<f64>() * r.width(),
            r.y_min + rng.gen::<f64>() * r.height(),
        ];
        let velocity = [sd * standard_normal(rng), sd * standard_normal(rng)];
        TrackingState { position, velocity }
    }

    /// Near-constant-velocity step, bounced back in when it leaves the region.
    pub fn transition<R: Rng + ?Sized>(
        &self,
        prev: &TrackingState,
        rng: &mut R,
    ) -> Result<TrackingState> {
        let c = &self.constants;
        let pos_sd = (c.kappa * c.sigma_u2 + c.sigma_z2).sqrt();
        let vel_sd = c.sigma_u2.sqrt();
        let position = [
            prev.position[0] + c.kappa * prev.velocity[0] + pos_sd * standard_normal(rng),
            prev.position[1] + c.kappa * prev.velocity[1] + pos_sd * standard_normal(rng),
        ];
        let velocity = [
            prev.velocity[0] + vel_sd * standard_normal(rng),
            prev.velocity[1] + vel_sd * standard_normal(rng),
        ];
        if self.region.contains(position) {
            return Ok(TrackingState { position, velocity });
        }
        let (position, velocity) = reflect(&self.region, prev.position, position, velocity)?;
        Ok(TrackingState { position, velocity })
    }

    /// Noise-free reading in dB at every sensor: `10·log10(P_t/d^ν + ρ)`.
    pub fn mean_readings(&self, position: [f64; 2], params: &TrackingParams) -> Vec<f64> {
        self.sensors
            .positions()
            .iter()
            .map(|s| mean_reading(position, *s, params))
            .collect()
    }

    /// `Σ_j ln N(y_j | 10·log10(P_t/‖r-s_j‖^ν + ρ), σ_ε²)`.
    pub fn obs_log_lik(&self, y: &[f64], state: &TrackingState, params: &TrackingParams) -> f64 {
        let var = self.constants.sigma_eps2;
        let inv_two_var = 0.5 / var;
        let rho = params.log_rho.exp();
        let mut sq = 0.0;
        for (s, &yj) in self.sensors.positions().iter().zip(y) {
            let d = yj - mean_reading_with(state.position, *s, params, rho);
            sq += d * d;
        }
        -0.5 * y.len() as f64 * (LN_2PI + var.ln()) - inv_two_var * sq
    }
}

#[inline]
fn mean_reading(position: [f64; 2], sensor: [f64; 2], params: &TrackingParams) -> f64 {
    mean_reading_with(position, sensor, params, params.log_rho.exp())
}

/// `rho` is `exp(log_rho)`, hoisted out of the per-sensor loop. The direct
/// form `ln(e^a + ρ)` is about twice as fast as `log_add_exp`; the latter is
/// kept for exponents where `e^a` or `ρ` leave the normal range.
#[inline]
fn mean_reading_with(
    position: [f64; 2],
    sensor: [f64; 2],
    params: &TrackingParams,
    rho: f64,
) -> f64 {
    let dx = position[0] - sensor[0];
    let dy = position[1] - sensor[1];
    let d2 = (dx * dx + dy * dy).max(DISTANCE_FLOOR * DISTANCE_FLOOR);
    let log_received = params.log_pt - 0.5 * params.nu * d2.ln();
    let log_total = if log_received.abs() < 700.0 && params.log_rho.abs() < 700.0 {
        (log_received.exp() + rho).ln()
    } else {
        log_add_exp(log_received, params.log_rho)
    };
    DB_PER_NEPER * log_total
}

impl StateSpaceModel for TrackingModel {
    type State = TrackingState;

    fn state_dim(&self) -> usize {
        4
    }

    fn obs_dim(&self) -> usize {
        self.sensors.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R) -> TrackingState {
        self.prior_sample(rng)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        prev: &TrackingState,
        _step: usize,
        _theta: &[f64],
        rng: &mut R,
    ) -> Result<TrackingState> {
        self.transition(prev, rng)
    }

    fn observation_log_lik(
        &self,
        y: &[f64],
        state: &TrackingState,
        _step: usize,
        theta: &[f64],
    ) -> f64 {
        let params = TrackingParams {
            log_pt: theta[0],
            nu: theta[1],
            log_rho: theta[2],
        };
        self.obs_log_lik(y, state, &params)
    }

    fn state_vector(&self, state: &TrackingState) -> DVector<f64> {
        DVector::from_vec(vec![
            state.position[0],
            state.position[1],
            state.velocity[0],
            state.velocity[1],
        ])
    }
}

/// Synthetic observations plus the latent path that produced them.
///
/// The trajectory (`x_0..x_m`) is kept for diagnostics only.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedDataset {
    pub observations: Vec<Vec<f64>>,
    pub trajectory: Vec<TrackingState>,
}

/// Draws `x_0` from the prior, runs `horizon` transitions and records a
/// reading at every sensor after each one.
pub fn simulate_dataset<R: Rng + ?Sized>(
    model: &TrackingModel,
    params: &TrackingParams,
    horizon: usize,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    let initial = model.prior_sample(rng);
    simulate_from(model, params, initial, horizon, rng)
}

/// Like [`simulate_dataset`] but starting from a given `x_0`.
pub fn simulate_from<R: Rng + ?Sized>(
    model: &TrackingModel,
    params: &TrackingParams,
    initial: TrackingState,
    horizon: usize,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    if horizon == 0 {
        return Err(Error::usage("horizon must be at least 1"));
    }
    let noise_sd = model.constants.sigma_eps2.sqrt();
    let mut state = initial;
    let mut trajectory = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    trajectory.push(state);
    for _ in 0..horizon {
        state = model.transition(&state, rng)?;
        let y = model
            .mean_readings(state.position, params)
            .into_iter()
            .map(|m| m + noise_sd * standard_normal(rng))
            .collect();
        observations.push(y);
        trajectory.push(state);
    }
    Ok(SimulatedDataset {
        observations,
        trajectory,
    })
}

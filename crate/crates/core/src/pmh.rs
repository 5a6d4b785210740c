//! Particle Metropolis-Hastings: a Gaussian random-walk chain over `θ` whose
//! acceptance ratio uses particle-filter likelihood estimates.
//!
//! The estimate attached to the current state is cached and reused until the
//! state changes. Re-estimating it every step would target a different
//! distribution; caching keeps the exact posterior invariant.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{MvNormal, RngStream};
use crate::target::{LogLikelihood, ParameterVector, Prior};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub theta: ParameterVector,
    /// `ln ℓ^N(y|θ)` as estimated when `θ` was proposed.
    pub cached_log_lik: f64,
    pub cached_log_prior: f64,
}

impl ChainState {
    fn log_target(&self) -> f64 {
        self.cached_log_lik + self.cached_log_prior
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmhConfig {
    /// `L`: number of proposals; the chain holds `L + 1` states.
    pub chain_length: usize,
    pub proposal_covariance: DMatrix<f64>,
    /// `N`: particles per likelihood estimate.
    pub particles: usize,
    pub burn_in_fraction: f64,
}

impl PmhConfig {
    /// Random-walk covariance `scale · diag(0.22, 4, 0.4)`.
    pub fn tracking_proposal(scale: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.22, 4.0, 0.4])) * scale
    }

    /// Defaults for the tracking model: scale 2/10, burn-in of half the chain.
    pub fn tracking(chain_length: usize, particles: usize) -> Self {
        PmhConfig {
            chain_length,
            proposal_covariance: Self::tracking_proposal(0.2),
            particles,
            burn_in_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain_length < 2 {
            return Err(Error::usage("chain length L must be at least 2"));
        }
        if self.particles == 0 {
            return Err(Error::usage("N must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::usage("burn-in fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmhRun {
    /// `θ_0, …, θ_L`.
    pub chain: Vec<ChainState>,
    /// Whether the proposal at step `r` was accepted; `accepted[0]` is the
    /// initial draw and always `true`.
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
}

impl PmhRun {
    /// One row per step: index, θ components, cached log-likelihood, accepted flag.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let d = self.chain.first().map_or(0, |c| c.theta.len());
        let cols: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).collect();
        writeln!(s, "step,{},log_likelihood,accepted", cols.join(",")).unwrap();
        for (r, (state, acc)) in self.chain.iter().zip(&self.accepted).enumerate() {
            write!(s, "{r},").unwrap();
            for v in state.theta.iter() {
                write!(s, "{v},").unwrap();
            }
            writeln!(s, "{},{}", state.cached_log_lik, u8::from(*acc)).unwrap();
        }
        s
    }
}

/// Runs a chain of `L` proposals started from a prior draw.
///
/// Proposals and uniforms come from `rng.split([0])`; the likelihood estimate
/// for step `r` uses `rng.split([1, r])`.
pub fn run_pmh<P, L>(
    prior: &P,
    likelihood: &L,
    config: &PmhConfig,
    rng: &RngStream,
) -> Result<PmhRun>
where
    P: Prior + ?Sized,
    L: LogLikelihood + ?Sized,
{
    config.validate()?;
    if config.proposal_covariance.nrows() != prior.dim() {
        return Err(Error::usage(
            "proposal covariance does not match the parameter dimension",
        ));
    }
    let step = MvNormal::new(DVector::zeros(prior.dim()), &config.proposal_covariance)?;
    let mut walk = rng.split(&[0]);

    let theta = prior.sample(&mut walk);
    let mut current = ChainState {
        cached_log_prior: prior.log_density(&theta),
        cached_log_lik: likelihood.log_likelihood(&theta, &mut rng.split(&[1, 0]))?,
        theta,
    };
    let mut chain = Vec::with_capacity(config.chain_length + 1);
    let mut accepted = Vec::with_capacity(config.chain_length + 1);
    chain.push(current.clone());
    accepted.push(true);
    let mut accepts = 0usize;

    for r in 1..=config.chain_length {
        let proposal = &current.theta + step.sample(&mut walk);
        let u: f64 = walk.gen();
        let log_prior = prior.log_density(&proposal);
        let candidate = if log_prior == f64::NEG_INFINITY {
            None
        } else {
            let log_lik = likelihood.log_likelihood(&proposal, &mut rng.split(&[1, r as u64]))?;
            Some(ChainState {
                theta: proposal,
                cached_log_lik: log_lik,
                cached_log_prior: log_prior,
            })
        };
        let accept = match &candidate {
            None => false,
            Some(c) => accept_move(c.log_target(), current.log_target(), u),
        };
        if accept {
            current = candidate.expect("accepted a candidate");
            accepts += 1;
        }
        chain.push(current.clone());
        accepted.push(accept);
    }
    Ok(PmhRun {
        chain,
        accepted,
        acceptance_rate: accepts as f64 / config.chain_length as f64,
    })
}

/// `u < min(1, exp(proposed - current))`, compared in log space.
pub fn accept_move(proposed_log_target: f64, current_log_target: f64, u: f64) -> bool {
    if proposed_log_target == f64::NEG_INFINITY || proposed_log_target.is_nan() {
        return false;
    }
    if current_log_target == f64::NEG_INFINITY {
        return true;
    }
    u.ln() < proposed_log_target - current_log_target
}

/// Mean of `θ_{⌊L·f⌋+1}, …, θ_L` where `chain = [θ_0, …, θ_L]` and `f` is the
/// burn-in fraction.
pub fn pmh_posterior_mean(chain: &[ChainState], burn_in_fraction: f64) -> Result<ParameterVector> {
    let segment = post_burn_in(chain, burn_in_fraction)?;
    let mut mean = DVector::zeros(segment[0].theta.len());
    for s in segment {
        mean += &s.theta;
    }
    Ok(mean / segment.len() as f64)
}

/// The states kept after discarding burn-in.
pub fn post_burn_in(chain: &[ChainState], burn_in_fraction: f64) -> Result<&[ChainState]> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::usage("burn-in fraction must lie in [0, 1)"));
    }
    if chain.len() < 2 {
        return Err(Error::usage("chain has no states after burn-in"));
    }
    let l = chain.len() - 1;
    let start = (l as f64 * burn_in_fraction).floor() as usize + 1;
    if start > l {
        return Err(Error::usage("chain has no states after burn-in"));
    }
    Ok(&chain[start..])
}

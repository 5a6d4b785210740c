//! Nonlinear population Monte Carlo (NPMC) for Bayesian parameter estimation
//! in state-space models.
//!
//! The likelihood `ℓ(y|θ)` of a state-space model is rarely available in
//! closed form. This crate replaces it with the unbiased estimate produced by
//! a bootstrap particle filter ([`bf`]) and feeds it to an adaptive importance
//! sampler ([`nis`]) whose importance weights are clipped before
//! normalization, which keeps a handful of lucky samples from dominating the
//! population. A particle Metropolis-Hastings chain ([`pmh`]) and plain
//! population Monte Carlo (clipping disabled) serve as baselines, and
//! [`experiment`] drives reproducible comparisons on a target-tracking model
//! ([`ssm`]).
//!
//! ```
//! use npmc::nis::{posterior_mean, run_sampler, SamplerConfig};
//! use npmc::numerics::RngStream;
//! use npmc::target::ConjugateGaussian;
//!
//! let toy = ConjugateGaussian {
//!     prior_mean: 0.0,
//!     prior_var: 1.0,
//!     noise_var: 0.5,
//!     observations: vec![0.7, 1.1],
//! };
//! let config = SamplerConfig::npmc(2_000, 3, 1);
//! let clouds = run_sampler(&toy.prior(), &toy.likelihood(), &config, &RngStream::new(1, 0))?;
//! let estimate = posterior_mean(clouds.last().unwrap())[0];
//! assert!((estimate - toy.posterior().0).abs() < 0.05);
//! # Ok::<(), npmc::Error>(())
//! ```

pub mod bf;
pub mod error;
pub mod experiment;
pub mod nis;
pub mod numerics;
pub mod pmh;
pub mod ssm;
pub mod target;
pub mod verify;

pub use error::{Error, Result};

//! A particle Metropolis-Hastings chain on the tracking model. Writes the
//! chain to `pmh_chain.csv` when given `--write`.
//!
//!     cargo run --example pmh_chain [L] [--write]

use npmc::bf::ParticleFilterLikelihood;
use npmc::numerics::RngStream;
use npmc::pmh::{pmh_posterior_mean, run_pmh, PmhConfig};
use npmc::ssm::{simulate_dataset, TrackingModel, TrackingParams};
use npmc::target::GaussianPrior;

fn main() -> npmc::Result<()> {
    let chain_length = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2_000);
    let write = std::env::args().any(|a| a == "--write");

    let model = TrackingModel::default();
    let truth = TrackingParams::ground_truth();
    let data = simulate_dataset(&model, &truth, 50, &mut RngStream::new(2024, 0))?;
    let likelihood = ParticleFilterLikelihood::new(&model, &data.observations, 400);

    let config = PmhConfig::tracking(chain_length, 400);
    let run = run_pmh(
        &GaussianPrior::tracking(),
        &likelihood,
        &config,
        &RngStream::new(7, 0),
    )?;
    let est = pmh_posterior_mean(&run.chain, config.burn_in_fraction)?;
    println!(
        "L = {chain_length}, acceptance rate {:.3}",
        run.acceptance_rate
    );
    println!(
        "estimate {:.3?} vs truth {:.3?}",
        est.as_slice(),
        truth.to_theta().as_slice()
    );
    println!(
        "squared error {:.4}",
        (est - truth.to_theta()).norm_squared()
    );
    if write {
        std::fs::write("pmh_chain.csv", run.to_csv())?;
        println!("chain written to pmh_chain.csv");
    }
    Ok(())
}

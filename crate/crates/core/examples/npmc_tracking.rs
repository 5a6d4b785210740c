//! Estimates the transmitted power, path-loss exponent and noise floor of the
//! tracking model with NPMC and with plain PMC on the same dataset.
//!
//!     cargo run --example npmc_tracking [M] [K] [N]

use npmc::bf::ParticleFilterLikelihood;
use npmc::nis::{estimation_error, posterior_mean, run_sampler, SamplerConfig};
use npmc::numerics::RngStream;
use npmc::ssm::{simulate_dataset, TrackingModel, TrackingParams};
use npmc::target::GaussianPrior;

fn main() -> npmc::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let m = args.first().copied().unwrap_or(200);
    let k = args.get(1).copied().unwrap_or(10);
    let n = args.get(2).copied().unwrap_or(400);

    let model = TrackingModel::default();
    let truth = TrackingParams::ground_truth();
    let data = simulate_dataset(&model, &truth, 50, &mut RngStream::new(2024, 0))?;
    let likelihood = ParticleFilterLikelihood::new(&model, &data.observations, n);
    let prior = GaussianPrior::tracking();
    println!("truth: {:?}", truth.to_theta().as_slice());

    for (name, config) in [
        ("npmc", SamplerConfig::npmc(m, k, n)),
        ("pmc", SamplerConfig::pmc(m, k, n)),
    ] {
        let clouds = run_sampler(&prior, &likelihood, &config, &RngStream::new(2024, 1))?;
        let last = clouds.last().unwrap();
        println!(
            "{name:>4}: estimate {:.3?}, squared error {:.4}",
            posterior_mean(last).as_slice(),
            estimation_error(last, &truth.to_theta())?
        );
    }
    Ok(())
}

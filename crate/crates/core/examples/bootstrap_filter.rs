//! Particle estimates of a linear-Gaussian likelihood against the exact
//! Kalman value, for growing particle counts.
//!
//!     cargo run --example bootstrap_filter

use npmc::bf::{filter_posterior_mean, run_bootstrap_filter};
use npmc::numerics::RngStream;
use npmc::ssm::kalman_log_likelihood;
use npmc::verify::{likelihood_ratio_study, scalar_benchmark};

fn main() -> npmc::Result<()> {
    let (model, ys) = scalar_benchmark(20, &mut RngStream::new(11, 0))?;
    let exact = kalman_log_likelihood(&model, &[], &ys)?;
    println!("Kalman log-likelihood: {exact:.4}");

    for n in [10, 50, 400, 3200] {
        let est = run_bootstrap_filter(&model, &[], &ys, n, &mut RngStream::new(11, n as u64))?;
        println!("N = {n:>5}: one run gives {:.4}", est.log_value.value());
    }

    // The estimate of the likelihood itself (not its log) is unbiased.
    for n in [10, 50, 400] {
        let s = likelihood_ratio_study(&model, &ys, n, 500, &RngStream::new(12, n as u64))?;
        println!(
            "N = {n:>5}: mean of estimate/exact over {} runs = {:.3} ± {:.3}",
            s.replicates, s.mean_ratio, s.standard_error
        );
    }

    let means = filter_posterior_mean(&model, &[], &ys, 1000, &mut RngStream::new(13, 0))?;
    println!("filtered mean of x_20: {:.3}", means.last().unwrap()[0]);
    Ok(())
}

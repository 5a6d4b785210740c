//! Error of the NPMC posterior mean against the exact answer on a conjugate
//! model, with exact and with particle-filter likelihoods. Both errors decay
//! like M^(-1/2).
//!
//!     cargo run --example convergence_rate

use npmc::bf::ParticleFilterLikelihood;
use npmc::numerics::RngStream;
use npmc::verify::{conjugate_benchmark, one_step_benchmark, rate_study};

fn main() -> npmc::Result<()> {
    let sizes = [100, 1_000, 10_000];
    let toy = conjugate_benchmark();
    let s = rate_study(
        &toy.prior(),
        &toy.likelihood(),
        toy.posterior().0,
        &sizes,
        2,
        1,
        50,
        &RngStream::new(1, 0),
    )?;
    println!(
        "exact likelihood:      slope {:.3}  {:?}",
        s.slope, s.points
    );

    let (model, ys, reference) = one_step_benchmark()?;
    let bf = ParticleFilterLikelihood::new(&model, &ys, 50);
    let s = rate_study(
        &reference.prior(),
        &bf,
        reference.posterior().0,
        &sizes,
        2,
        50,
        50,
        &RngStream::new(1, 1),
    )?;
    println!(
        "particle likelihood:   slope {:.3}  {:?}",
        s.slope, s.points
    );
    Ok(())
}

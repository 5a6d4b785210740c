//! A target bouncing around the monitored rectangle, and a few hand-picked
//! reflections.
//!
//!     cargo run --example reflection

use npmc::numerics::RngStream;
use npmc::ssm::{reflect, Region, TrackingModel, TrackingState};

fn main() -> npmc::Result<()> {
    let region = Region::default();
    for (prev, proposed) in [
        ([0.0, 9.0], [0.0, 11.0]),
        ([19.0, 0.0], [21.0, 0.0]),
        ([19.5, 9.5], [21.0, 10.8]),
    ] {
        let (p, v) = reflect(&region, prev, proposed, [1.0, 1.0])?;
        println!(
            "{prev:?} -> {proposed:?} lands at [{:.3}, {:.3}], velocity [{:.3}, {:.3}]",
            p[0], p[1], v[0], v[1]
        );
    }

    let model = TrackingModel::default();
    let mut rng = RngStream::new(5, 0);
    let mut x = TrackingState {
        position: [15.0, 5.0],
        velocity: [1.5, 0.8],
    };
    let mut bounces = 0;
    for _ in 0..200 {
        let next = model.transition(&x, &mut rng)?;
        if next.velocity[0].signum() != x.velocity[0].signum()
            || next.velocity[1].signum() != x.velocity[1].signum()
        {
            bounces += 1;
        }
        assert!(region.contains(next.position));
        x = next;
    }
    println!(
        "200 steps, about {bounces} direction flips, final position [{:.2}, {:.2}]",
        x.position[0], x.position[1]
    );
    Ok(())
}

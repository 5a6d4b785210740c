//! How clipping flattens a population of degenerate importance weights.
//!
//!     cargo run --example weight_clipping

use npmc::nis::{clip_weights, default_clip};
use npmc::numerics::normalize_log_weights;

fn effective_size(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

fn main() -> npmc::Result<()> {
    // Log-weights spanning a few hundred nats, as a particle-filter
    // likelihood produces early in a run.
    let m = 200;
    let raw: Vec<f64> = (0..m).map(|i| -((i * 37 % m) as f64).powf(1.3)).collect();
    let m_c = default_clip(m);

    let plain = normalize_log_weights(&raw)?;
    let clipped = normalize_log_weights(&clip_weights(&raw, m_c)?)?;

    println!("M = {m}, M_c = {m_c}");
    println!(
        "largest weight: {:.3} before, {:.4} after (ceiling 1/M_c = {:.4})",
        plain.iter().cloned().fold(0.0, f64::max),
        clipped.iter().cloned().fold(0.0, f64::max),
        1.0 / m_c as f64
    );
    println!(
        "effective sample size: {:.1} before, {:.1} after",
        effective_size(&plain),
        effective_size(&clipped)
    );
    Ok(())
}

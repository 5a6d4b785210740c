//! Seedable random streams and numerically stable weight/Gaussian primitives.
//!
//! Weights are carried in the natural-log domain everywhere. A particle-filter
//! likelihood is a product of tens of per-step averages and underflows quickly
//! in linear space.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Natural log of `2π`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// substreams for the same seed. Child streams derived with [`RngStream::split`]
/// depend only on the parent's identity and the key, never on how many
/// variates the parent has produced, so work can be scheduled in any order.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives the child stream addressed by `key` (e.g. `[iteration, sample]`).
    pub fn split(&self, key: &[u64]) -> RngStream {
        RngStream::new(self.seed, derive_id(self.stream_id, key))
    }
}

/// Mixes a key path into a stream identifier.
pub fn derive_id(parent: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(parent ^ 0x6a09_e667_f3bc_c908), |acc, &k| {
            splitmix64(acc ^ splitmix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15)))
        })
}

/// The SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// A non-normalized weight stored as its natural logarithm.
///
/// `-inf` stands for weight zero; `+inf` and NaN are rejected.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogWeight(f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::numerical(format!("invalid log-weight {value}")));
        }
        Ok(LogWeight(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// `ln Σ exp(values_i)`, shifted by the maximum so it never overflows.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("log_sum_exp of an empty list"));
    }
    Ok(log_sum_exp_unchecked(values))
}

pub(crate) fn log_sum_exp_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Converts log-weights to probabilities summing to one.
pub fn normalize_log_weights(values: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(values)?;
    if total == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights { iteration: None });
    }
    if !total.is_finite() {
        return Err(Error::numerical(format!("log-weight total is {total}")));
    }
    Ok(values.iter().map(|&v| (v - total).exp()).collect())
}

/// Draws `count` i.i.d. indices from the categorical distribution `weights`.
pub fn multinomial_sample<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::usage("multinomial_sample needs at least one weight"));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::usage(format!("invalid probability {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!("weights sum to {total}, expected 1")));
    }
    let cumulative = cumulative_sums(weights);
    let mut out = Vec::with_capacity(count);
    draw_from_cumulative(&cumulative, count, rng, &mut out);
    Ok(out)
}

pub(crate) fn cumulative_sums(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Inverse-CDF draws against a running-sum table. Zero-probability entries are
/// never selected because their cumulative value equals their predecessor's.
pub(crate) fn draw_from_cumulative<R: Rng + ?Sized>(
    cumulative: &[f64],
    count: usize,
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    let total = *cumulative.last().expect("non-empty table");
    let last_positive = {
        let mut i = cumulative.len() - 1;
        while i > 0 && cumulative[i] == cumulative[i - 1] {
            i -= 1;
        }
        i
    };
    out.clear();
    for _ in 0..count {
        let u = rng.gen::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u);
        out.push(idx.min(last_positive));
    }
}

/// Lower Cholesky factor of `covariance`, regularized when necessary.
///
/// A plain factorization is tried first. On failure `ε·I` is added with `ε`
/// starting at `1e-10·trace/d` and growing tenfold up to three times.
/// Returns the factor and the jitter that was applied.
pub fn regularized_cholesky(covariance: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = covariance.nrows();
    if d == 0 || covariance.ncols() != d {
        return Err(Error::usage(format!(
            "covariance must be square and non-empty, got {}x{}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("covariance has non-finite entries"));
    }
    let scale = covariance
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::usage("covariance is not symmetric"));
            }
        }
    }
    let sym = (covariance + covariance.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok((chol.l(), 0.0));
    }
    let trace = sym.trace();
    let base = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let mut eps = 1e-10 * base;
    for _ in 0..4 {
        let jittered = &sym + DMatrix::identity(d, d) * eps;
        if let Some(chol) = jittered.cholesky() {
            return Ok((chol.l(), eps));
        }
        eps *= 10.0;
    }
    Err(Error::numerical(
        "covariance is not positive definite even after jitter",
    ))
}

/// A multivariate normal distribution with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct MvNormal {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    log_norm: f64,
    jitter: f64,
}

impl MvNormal {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        if mean.len() != covariance.nrows() {
            return Err(Error::usage(format!(
                "mean has dimension {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let (factor, jitter) = regularized_cholesky(covariance)?;
        let log_det_half: f64 = factor.diagonal().iter().map(|v| v.ln()).sum();
        if !log_det_half.is_finite() {
            return Err(Error::numerical("singular covariance"));
        }
        let log_norm = -0.5 * mean.len() as f64 * LN_2PI - log_det_half;
        Ok(Self {
            mean,
            factor,
            log_norm,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The covariance actually sampled from (including any jitter).
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let z = self
            .factor
            .solve_lower_triangular(&diff)
            .expect("factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// One draw from `N(mean, covariance)`.
pub fn sample_multivariate_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(MvNormal::new(mean.clone(), covariance)?.sample(rng))
}

/// `ln N(x | mean, covariance)`.
pub fn gaussian_log_pdf(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::usage("point and mean dimensions differ"));
    }
    Ok(MvNormal::new(mean.clone(), covariance)?.log_pdf(x))
}

/// Univariate normal log-density.
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - 0.5 * d * d / variance
}

/// Weighted mean `Σ w_i θ_i` and covariance `Σ w_i (θ_i-μ)(θ_i-μ)ᵀ`, without
/// small-sample correction.
pub fn weighted_mean_cov(
    samples: &[DVector<f64>],
    weights: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if samples.is_empty() {
        return Err(Error::usage("weighted_mean_cov of an empty sample"));
    }
    if samples.len() != weights.len() {
        return Err(Error::usage(format!(
            "{} samples but {} weights",
            samples.len(),
            weights.len()
        )));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::usage("samples have differing dimensions"));
    }
    let mut mean = DVector::zeros(d);
    for (s, &w) in samples.iter().zip(weights) {
        mean.axpy(w, s, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (s, &w) in samples.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let diff = s - &mean;
        cov.ger(w, &diff, &diff, 1.0);
    }
    Ok((mean, cov))
}

/// Draws a standard normal variate.
#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

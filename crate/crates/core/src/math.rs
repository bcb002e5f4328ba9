//! Log-space helpers, the standard normal CDF and seed derivation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `ln(Σ exp(x_i))`, stable for large magnitudes. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights in place into probabilities. Returns the log of the
/// normalizing constant, or `None` if every entry is `-inf`.
pub fn normalize_log_weights(log_w: &mut [f64]) -> Option<f64> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    for w in log_w.iter_mut() {
        *w = (*w - lse).exp();
    }
    Some(lse)
}

/// Draws an index proportionally to `exp(log_w[i])`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_w.iter().map(|&x| (x - max).exp()).sum();
    sample_scaled(log_w.iter().map(|&x| (x - max).exp()), total, rng)
}

/// Draws an index proportionally to non-negative `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    sample_scaled(weights.iter().copied(), total, rng)
}

fn sample_scaled<R, I>(weights: I, total: f64, rng: &mut R) -> Option<usize>
where
    R: Rng + ?Sized,
    I: Iterator<Item = f64>,
{
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = Some(i);
        }
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    // rounding left u just above the accumulated sum
    last_positive
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normalized Gaussian density.
#[inline]
pub fn gaussian_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    INV_SQRT_2PI / sigma * (-0.5 * z * z).exp()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d2_49d1_33b8_49eb);
    z ^ (z >> 31)
}

/// Independent seeded substream keyed by `(seed, a, b)`.
///
/// Every random decision in the engine draws from a generator derived here, so
/// results depend only on the seed and the position in the stream, never on
/// the thread schedule.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    let mut state = splitmix64(seed ^ 0x5eed_0f_9d49);
    for (k, chunk) in bytes.chunks_mut(8).enumerate() {
        state = splitmix64(state ^ a.rotate_left(17 * k as u32) ^ b.rotate_left(31 + 7 * k as u32));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

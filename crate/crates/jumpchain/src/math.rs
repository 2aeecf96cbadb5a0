//! Log-space arithmetic and small numeric helpers.

use rand::Rng;

/// Log of an exactly-zero mass. `f64::NEG_INFINITY` already saturates under
/// addition with finite values, which is the semantics we need; subtraction
/// of two log-zeros is never performed by this crate.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// `log(sum(exp(xs)))` with max-subtraction. Empty input or all log-zero
/// yields `LOG_ZERO`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(LOG_ZERO, f64::max);
    if m == LOG_ZERO {
        return LOG_ZERO;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Normalizes nonnegative weights in place; returns the original sum.
/// Leaves the slice untouched when the sum is zero.
pub fn normalize(weights: &mut [f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    if s > 0.0 {
        for w in weights.iter_mut() {
            *w /= s;
        }
    }
    s
}

/// Samples an index proportional to nonnegative `weights` (not necessarily
/// normalized). Returns `None` when the total mass is zero or non-finite.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    // Rounding can leave u marginally above the accumulated sum.
    weights.iter().rposition(|&w| w > 0.0)
}

/// Unit-rate exponential variate by inversion.
pub fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // random() is in [0,1); flip so the argument of ln is in (0,1].
    -(1.0 - rng.random::<f64>()).ln()
}

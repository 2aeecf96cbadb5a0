//! Exact samplers and log-densities for event times driven by
//! piecewise-constant rates: first-arrival (holding) times by inversion and
//! inhomogeneous Poisson processes piece by piece.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::math::{sample_exp1, LOG_ZERO};

/// Nonnegative piecewise-constant rate on `[start, end]`: `values[i]` holds
/// on `[starts[i], starts[i+1])`, the last piece closing at `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    starts: Vec<f64>,
    values: Vec<f64>,
    end: f64,
}

impl RateFunction {
    pub fn new(starts: Vec<f64>, values: Vec<f64>, end: f64) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::invalid("need one rate value per piece"));
        }
        for w in starts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("rate pieces must be strictly increasing"));
            }
        }
        if !(end > *starts.last().unwrap()) {
            return Err(Error::invalid("rate domain must end after the last piece"));
        }
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("rates must be finite and nonnegative"));
        }
        Ok(RateFunction { starts, values, end })
    }

    pub fn constant(start: f64, end: f64, value: f64) -> Result<Self> {
        RateFunction::new(vec![start], vec![value], end)
    }

    pub fn start(&self) -> f64 {
        self.starts[0]
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Rate at `t` (right-continuous; `t = end` takes the last piece).
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.starts.partition_point(|&s| s <= t);
        self.values[idx.saturating_sub(1)]
    }

    /// Exact `∫_a^b rate`, for `start <= a <= b <= end`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        let mut total = 0.0;
        let mut lo = a;
        let mut idx = self.starts.partition_point(|&s| s <= a).saturating_sub(1);
        while lo < b {
            let hi = if idx + 1 < self.starts.len() {
                self.starts[idx + 1].min(b)
            } else {
                b
            };
            total += self.values[idx] * (hi - lo);
            lo = hi;
            idx += 1;
        }
        total
    }

    fn pieces_from(&self, u: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let first = self.starts.partition_point(|&s| s <= u).saturating_sub(1);
        (first..self.values.len()).map(move |i| {
            let a = self.starts[i].max(u);
            let b = if i + 1 < self.starts.len() { self.starts[i + 1] } else { self.end };
            (a, b, self.values[i])
        })
    }
}

/// First arrival after `u` of a Poisson process with this rate, with density
/// `rate(w) * exp(-∫_u^w rate)`, sampled exactly by inversion per constant
/// piece. `None` when the arrival falls beyond `horizon`, which happens with
/// probability `exp(-∫_u^horizon rate)`.
pub fn sample_holding_time<R: Rng + ?Sized>(
    u: f64,
    rate: &RateFunction,
    horizon: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if !(u < horizon) || u < rate.start() || horizon > rate.end() {
        return Err(Error::invalid(format!(
            "holding-time window [{u}, {horizon}] outside rate domain"
        )));
    }
    let mut target = sample_exp1(rng);
    for (a, b, v) in rate.pieces_from(u) {
        if a >= horizon {
            break;
        }
        let hi = b.min(horizon);
        let hazard = v * (hi - a);
        if target <= hazard {
            return Ok(Some(a + target / v));
        }
        target -= hazard;
    }
    Ok(None)
}

/// `log rate(w) - ∫_u^w rate`, the log density of the first arrival at `w`.
/// Returns log-zero when `rate(w) = 0`.
pub fn holding_log_density(u: f64, w: f64, rate: &RateFunction) -> f64 {
    debug_assert!(u < w);
    let r = rate.value_at(w);
    if r <= 0.0 {
        return LOG_ZERO;
    }
    r.ln() - rate.integral(u, w)
}

/// Inhomogeneous Poisson process on `[a, b]`: per constant piece the count is
/// Poisson(rate * length) and positions are uniform. Returned times are
/// sorted.
pub fn sample_poisson_process<R: Rng + ?Sized>(
    rate: &RateFunction,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if a < rate.start() || b > rate.end() || !(b >= a) {
        return Err(Error::invalid(format!(
            "poisson window [{a}, {b}] outside rate domain"
        )));
    }
    let mut points = Vec::new();
    for (lo, hi, v) in rate.pieces_from(a) {
        if lo >= b {
            break;
        }
        let hi = hi.min(b);
        let mass = v * (hi - lo);
        if mass <= 0.0 {
            continue;
        }
        let count = Poisson::new(mass)
            .map_err(|e| Error::invalid(format!("poisson mass {mass}: {e}")))?
            .sample(rng) as usize;
        let piece_start = points.len();
        for _ in 0..count {
            points.push(lo + rng.random::<f64>() * (hi - lo));
        }
        points[piece_start..].sort_by(|x, y| x.partial_cmp(y).unwrap());
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn holding_log_density_constant_rate() {
        let rate = RateFunction::constant(0.0, 2.0, 2.0).unwrap();
        assert!((holding_log_density(0.0, 1.0, &rate) - (2.0f64.ln() - 2.0)).abs() < 1e-12);
        assert!((holding_log_density(0.0, 0.5, &rate) - (2.0f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn holding_log_density_piecewise() {
        // rate 1 on [0,1), 3 on [1,2]; at w=1.5 the integral is 1 + 0.5*3.
        let rate = RateFunction::new(vec![0.0, 1.0], vec![1.0, 3.0], 2.0).unwrap();
        let expect = 3.0f64.ln() - 2.5;
        assert!((holding_log_density(0.0, 1.5, &rate) - expect).abs() < 1e-12);
        // hand-check oracle: fine-grid Riemann sum of the integral
        let grid: f64 = (0..15_000).map(|i| rate.value_at(1e-4 * (i as f64 + 0.5))).sum::<f64>() * 1e-4;
        assert!((grid - 2.5).abs() < 1e-3);
    }

    #[test]
    fn holding_zero_rate_is_log_zero() {
        let rate = RateFunction::new(vec![0.0, 1.0], vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(holding_log_density(0.0, 1.5, &rate), LOG_ZERO);
    }

    #[test]
    fn integral_spans_pieces() {
        let rate = RateFunction::new(vec![0.0, 1.0, 1.5], vec![1.0, 3.0, 0.5], 2.0).unwrap();
        assert!((rate.integral(0.5, 1.75) - (0.5 + 1.5 + 0.125)).abs() < 1e-12);
        assert_eq!(rate.integral(0.2, 0.2), 0.0);
    }

    #[test]
    fn value_at_right_continuous() {
        let rate = RateFunction::new(vec![0.0, 1.0], vec![1.0, 3.0], 2.0).unwrap();
        assert_eq!(rate.value_at(1.0), 3.0);
        assert_eq!(rate.value_at(0.999999), 1.0);
        assert_eq!(rate.value_at(2.0), 3.0);
    }

    #[test]
    fn poisson_zero_rate_is_empty() {
        let rate = RateFunction::constant(0.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(sample_poisson_process(&rate, 0.0, 1.0, &mut rng).unwrap().is_empty());
        }
    }

    #[test]
    fn poisson_respects_piecewise_support() {
        let rate = RateFunction::new(vec![0.0, 1.0], vec![2.0, 0.0], 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0usize;
        let reps = 20_000;
        for _ in 0..reps {
            let pts = sample_poisson_process(&rate, 0.0, 2.0, &mut rng).unwrap();
            assert!(pts.iter().all(|&t| t < 1.0));
            total += pts.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean={mean}");
    }

    #[test]
    fn holding_time_exceeds_horizon_with_survival_probability() {
        let rate = RateFunction::constant(0.0, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 200_000;
        let exceed = (0..reps)
            .filter(|_| sample_holding_time(0.0, &rate, 1.0, &mut rng).unwrap().is_none())
            .count();
        let frac = exceed as f64 / reps as f64;
        let expect = (-2.0f64).exp();
        assert!((frac - expect).abs() < 0.004, "frac={frac} expect={expect}");
    }
}

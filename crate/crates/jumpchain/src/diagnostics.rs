//! Chain-quality diagnostics: geometric-drift estimation, the
//! joint-distribution (marginal-conditional vs successive-conditional)
//! invariance test, total-variation distance, and effective sample size.
//!
//! Geometric ergodicity itself cannot be certified by simulation; what these
//! tools certify are its observable consequences — a fitted one-step drift
//! slope below one, fast total-variation decay, and kernel invariance under
//! the joint test.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ffbs::{backward_sample, build_skeleton_hmm, forward_filter};
use crate::mjp::{Evidence, EventSequence, IntensityModel, Trajectory};
use crate::raoteh::resample_virtual;

/// Two-sample (or one-sample) Kolmogorov–Smirnov outcome.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)` with the
/// usual finite-sample argument correction.
fn kolmogorov_p(d: f64, effective_n: f64) -> f64 {
    let rn = effective_n.sqrt();
    let lambda = (rn + 0.12 + 0.11 / rn) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += 2.0 * sign * term;
        sign = -sign;
        if term < 1e-18 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Two-sample KS test. Ties are handled by comparing the empirical CDFs at
/// every pooled value, which keeps the statistic exact for discrete data
/// (the p-value stays the asymptotic continuous one, conservative there).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("KS requires nonempty samples"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n1, n2) = (a.len(), b.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        let v = a[i].min(b[j]);
        while i < n1 && a[i] <= v {
            i += 1;
        }
        while j < n2 && b[j] <= v {
            j += 1;
        }
        let diff = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        d = d.max(diff);
    }
    let en = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_p(d, en),
        n1,
        n2,
    })
}

/// One-sample KS test against Uniform(0,1).
pub fn ks_uniform(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::invalid("KS requires a nonempty sample"));
    }
    let mut s = samples.to_vec();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = s.len();
    let mut d = 0.0f64;
    for (k, &v) in s.iter().enumerate() {
        let hi = (k + 1) as f64 / n as f64 - v;
        let lo = v - k as f64 / n as f64;
        d = d.max(hi.max(lo));
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_p(d, n as f64),
        n1: n,
        n2: 0,
    })
}

/// Half L1 distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "support size mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<f64>())
}

/// Effective sample size with the initial-positive-sequence truncation:
/// autocovariance pairs `γ_{2m} + γ_{2m+1}` are accumulated while positive.
/// A constant series reports `n` by convention; the estimate is capped at
/// `n`.
pub fn ess(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let gamma = |k: usize| -> f64 {
        (0..n - k)
            .map(|i| (series[i] - mean) * (series[i + k] - mean))
            .sum::<f64>()
            / nf
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return nf; // constant series
    }
    let mut sigma2 = -g0;
    let mut m = 0usize;
    while 2 * m + 1 < n {
        let pair = gamma(2 * m) + gamma(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sigma2 += 2.0 * pair;
        m += 1;
    }
    if sigma2 <= 0.0 {
        return nf;
    }
    (nf * g0 / sigma2).min(nf)
}

/// One-step conditional means of the jump count from seeded trajectories,
/// with a weighted affine fit. A fitted slope below one (by a few standard
/// errors) is the empirical signature of the geometric drift of the kernel.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub seed_jump_counts: Vec<usize>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub reps: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl DriftReport {
    /// True when `slope + k * se < 1`.
    pub fn slope_below_one_by(&self, k: f64) -> bool {
        self.slope + k * self.slope_se < 1.0
    }
}

/// Estimates the one-step drift of `kernel` from seed trajectories:
/// `reps` independent applications per seed, then a weighted least-squares
/// line through (seed jump count, mean posterior jump count).
pub fn drift_estimate<R, K>(
    mut kernel: K,
    seeds: &[Trajectory],
    reps: usize,
    rng: &mut R,
) -> Result<DriftReport>
where
    R: Rng + ?Sized,
    K: FnMut(&Trajectory, &mut R) -> Result<Trajectory>,
{
    drift_estimate_with(
        |x, r| kernel(x, r),
        |t| t.jump_count(),
        seeds,
        reps,
        rng,
    )
}

/// Generic drift estimation over any chain state with a jump-count
/// statistic (network paths use the total over unobserved nodes).
pub fn drift_estimate_with<S, R, K, C>(
    mut kernel: K,
    count: C,
    seeds: &[S],
    reps: usize,
    rng: &mut R,
) -> Result<DriftReport>
where
    R: Rng + ?Sized,
    K: FnMut(&S, &mut R) -> Result<S>,
    C: Fn(&S) -> usize,
{
    if reps < 2 || seeds.is_empty() {
        return Err(Error::invalid("drift estimation needs seeds and reps >= 2"));
    }
    let mut seed_jump_counts = Vec::with_capacity(seeds.len());
    let mut means = Vec::with_capacity(seeds.len());
    let mut std_errors = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let next = kernel(seed, rng)?;
            let j = count(&next) as f64;
            sum += j;
            sumsq += j * j;
        }
        let mean = sum / reps as f64;
        let var = (sumsq / reps as f64 - mean * mean).max(0.0) / (reps as f64 - 1.0);
        seed_jump_counts.push(count(seed));
        means.push(mean);
        std_errors.push(var.sqrt());
    }
    // WLS with weights 1/se^2 (floored so deterministic kernels stay finite)
    let weights: Vec<f64> = std_errors.iter().map(|&se| 1.0 / se.max(1e-9).powi(2)).collect();
    let wsum: f64 = weights.iter().sum();
    let xbar: f64 = weights
        .iter()
        .zip(&seed_jump_counts)
        .map(|(&w, &x)| w * x as f64)
        .sum::<f64>()
        / wsum;
    let ybar: f64 = weights.iter().zip(&means).map(|(&w, &y)| w * y).sum::<f64>() / wsum;
    let sxx: f64 = weights
        .iter()
        .zip(&seed_jump_counts)
        .map(|(&w, &x)| w * (x as f64 - xbar).powi(2))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("drift seeds must have distinct jump counts"));
    }
    let sxy: f64 = weights
        .iter()
        .zip(&seed_jump_counts)
        .zip(&means)
        .map(|((&w, &x), &y)| w * (x as f64 - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_se = (1.0 / sxx).sqrt();
    Ok(DriftReport {
        seed_jump_counts,
        means,
        std_errors,
        reps,
        slope,
        intercept,
        slope_se,
    })
}

/// Configuration of the joint-distribution test.
#[derive(Debug, Clone, Copy)]
pub struct GewekeConfig {
    /// Draws kept per simulator.
    pub n: usize,
    /// Stride between kept draws of the successive-conditional chain; the
    /// KS test assumes roughly independent draws, so the chain is thinned.
    pub thin: usize,
    /// Kept draws discarded from the front of the successive chain.
    pub burnin: usize,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        GewekeConfig {
            n: 10_000,
            thin: 3,
            burnin: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GewekeReport {
    pub results: Vec<(String, KsResult)>,
}

impl GewekeReport {
    pub fn min_p(&self) -> f64 {
        self.results
            .iter()
            .map(|(_, r)| r.p_value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_pass(&self, threshold: f64) -> bool {
        self.results.iter().all(|(_, r)| r.p_value > threshold)
    }
}

/// Joint-distribution invariance test. The marginal-conditional simulator
/// draws `(X, Y)` fresh from prior and likelihood; the successive-conditional
/// simulator alternates the kernel under test with a redraw of the data.
/// When the kernel leaves the posterior invariant, both simulators sample
/// the same joint law, so every statistic must agree in distribution.
pub fn geweke_joint_test<X, Y, R, FP, FD, FK>(
    rng: &mut R,
    mut sample_prior: FP,
    mut sample_data: FD,
    mut kernel: FK,
    statistics: &[(&str, &dyn Fn(&X, &Y) -> f64)],
    config: &GewekeConfig,
) -> Result<GewekeReport>
where
    R: Rng + ?Sized,
    FP: FnMut(&mut R) -> Result<X>,
    FD: FnMut(&X, &mut R) -> Result<Y>,
    FK: FnMut(X, &Y, &mut R) -> Result<X>,
{
    if config.n < 10 || config.thin == 0 {
        return Err(Error::invalid("joint test needs n >= 10 and thin >= 1"));
    }
    let mut marginal: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n); statistics.len()];
    for _ in 0..config.n {
        let x = sample_prior(rng)?;
        let y = sample_data(&x, rng)?;
        for (k, (_, f)) in statistics.iter().enumerate() {
            marginal[k].push(f(&x, &y));
        }
    }

    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n); statistics.len()];
    let mut x = sample_prior(rng)?;
    let mut y = sample_data(&x, rng)?;
    let total = (config.burnin + config.n) * config.thin;
    for it in 0..total {
        x = kernel(x, &y, rng)?;
        y = sample_data(&x, rng)?;
        if it % config.thin == config.thin - 1 {
            let kept = it / config.thin;
            if kept >= config.burnin {
                for (k, (_, f)) in statistics.iter().enumerate() {
                    successive[k].push(f(&x, &y));
                }
            }
        }
    }

    let results = statistics
        .iter()
        .zip(marginal.iter().zip(&successive))
        .map(|((name, _), (mc, sc))| Ok((name.to_string(), ks_two_sample(mc, sc)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GewekeReport { results })
}

/// Deliberately broken variant of the trajectory kernel that redraws the
/// skeleton ignoring every potential. Exists so the invariance battery can
/// demonstrate its own power: this kernel must fail the joint test hard.
pub fn rao_teh_step_dropping_potentials<R: Rng + ?Sized>(
    model: &IntensityModel,
    evidence: &Evidence,
    traj: &Trajectory,
    rng: &mut R,
) -> Result<Trajectory> {
    let times = resample_virtual(model, traj, rng)?;
    let hmm = build_skeleton_hmm(model, &times, evidence)?.without_potentials();
    let filtered = forward_filter(&hmm)?;
    let skeleton = backward_sample(&hmm, &filtered, rng)?;
    let ev = EventSequence::new(model.tmin(), model.tmax(), times, skeleton)?;
    Ok(ev.compact())
}

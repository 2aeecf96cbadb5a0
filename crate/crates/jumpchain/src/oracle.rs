//! Brute-force ground truth for small instances: exact transition
//! probabilities by the uniformization series, a fine-grid discretization of
//! the trajectory posterior, and exhaustive enumeration of skeleton chains.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ffbs::SkeletonHmm;
use crate::math::{normalize, LOG_ZERO};
use crate::mjp::{Evidence, IntensityModel};

/// `exp(Q * dt)` for a homogeneous generator given by its off-diagonal rates
/// (diagonal entries of the input are ignored). Computed with the
/// uniformization series `Σ_n Poisson(r*dt; n) * P_unif^n` truncated when the
/// remaining Poisson tail mass drops below 1e-14, with `r` the maximum
/// leaving rate. Very large `r*dt` is handled by repeated squaring of the
/// half-interval solution so the Poisson weights stay representable.
pub fn transition_probability(rates: &Array2<f64>, dt: f64) -> Array2<f64> {
    let n = rates.nrows();
    assert_eq!(n, rates.ncols(), "generator must be square");
    assert!(dt >= 0.0, "dt must be nonnegative");
    let leaving: Vec<f64> = (0..n)
        .map(|s| (0..n).filter(|&s2| s2 != s).map(|s2| rates[[s, s2]]).sum())
        .collect();
    let r = leaving.iter().copied().fold(0.0, f64::max);
    let mass = r * dt;
    if mass == 0.0 {
        return Array2::eye(n);
    }
    if mass > 200.0 {
        let half = transition_probability(rates, dt / 2.0);
        return half.dot(&half);
    }

    let mut p_unif = Array2::zeros((n, n));
    for s in 0..n {
        for s2 in 0..n {
            p_unif[[s, s2]] = if s == s2 {
                1.0 - leaving[s] / r
            } else {
                rates[[s, s2]] / r
            };
        }
    }

    let mut result = Array2::zeros((n, n));
    let mut term = Array2::eye(n);
    let mut weight = (-mass).exp();
    let mut cumulative = 0.0;
    let mut k = 0usize;
    while cumulative < 1.0 - 1e-14 {
        result = result + &term * weight;
        cumulative += weight;
        k += 1;
        weight *= mass / k as f64;
        term = term.dot(&p_unif);
        if k > 100_000 {
            break; // unreachable for mass <= 200, kept as a hard stop
        }
    }
    result
}

/// Discrete-time approximation of the smoothing posterior on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    step: f64,
    times: Vec<f64>,
    marginals: Vec<Vec<f64>>,
}

impl GridPosterior {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Index of the grid time nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.times[0]) / self.step).round() as isize;
        k.clamp(0, self.times.len() as isize - 1) as usize
    }

    /// Posterior state distribution at the grid time nearest to `t`.
    pub fn marginal_at(&self, t: f64) -> &[f64] {
        &self.marginals[self.nearest_index(t)]
    }
}

/// Smoothing marginals of the grid HMM whose step kernels are the exact
/// interval solutions `exp(Q Δ)` (split at intensity breakpoints) and whose
/// per-grid-point log emissions are supplied by `log_emission(k, t_k, s)`.
pub fn grid_smoothing(
    model: &IntensityModel,
    step: f64,
    log_emission: &dyn Fn(usize, f64, usize) -> f64,
) -> Result<GridPosterior> {
    let span = model.tmax() - model.tmin();
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let k_steps = (span / step).round() as usize;
    if k_steps == 0 || ((k_steps as f64) * step - span).abs() > 1e-9 * span {
        return Err(Error::invalid(format!(
            "grid step {step} does not divide the window of length {span}"
        )));
    }
    let n = model.n_states();
    let times: Vec<f64> = (0..=k_steps).map(|k| model.tmin() + k as f64 * step).collect();

    // One kernel per grid interval; intervals fully inside one block share
    // the cached block kernel.
    let mut block_kernel: Vec<Option<Array2<f64>>> = vec![None; model.n_blocks()];
    let mut kernels: Vec<Array2<f64>> = Vec::with_capacity(k_steps);
    for k in 0..k_steps {
        let a = times[k];
        let b = times[k + 1];
        let blk = model.block_index(a);
        let (_, blk_end) = model.block_span(blk);
        if b <= blk_end + 1e-15 * span {
            let cached = &mut block_kernel[blk];
            if cached.is_none() {
                *cached = Some(transition_probability(model.q_block(blk), step));
            }
            kernels.push(cached.clone().unwrap());
        } else {
            // interval straddles breakpoints: exact product over sub-pieces
            let mut kern = Array2::eye(n);
            let mut lo = a;
            let mut cur = blk;
            while lo < b - 1e-15 * span {
                let (_, end) = model.block_span(cur);
                let hi = end.min(b);
                kern = kern.dot(&transition_probability(model.q_block(cur), hi - lo));
                lo = hi;
                cur += 1;
            }
            kernels.push(kern);
        }
    }

    let emit = |k: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|s| log_emission(k, times[k], s)).collect();
        let m = raw.iter().copied().fold(LOG_ZERO, f64::max);
        if m == LOG_ZERO {
            vec![0.0; n]
        } else {
            raw.iter().map(|&v| (v - m).exp()).collect()
        }
    };

    // forward pass
    let mut forward: Vec<Vec<f64>> = Vec::with_capacity(k_steps + 1);
    let e0 = emit(0);
    let mut f: Vec<f64> = (0..n).map(|s| model.nu()[s] * e0[s]).collect();
    if normalize(&mut f) <= 0.0 {
        return Err(Error::ImpossibleEvidence { step: 0 });
    }
    forward.push(f);
    for k in 0..k_steps {
        let prev = forward.last().unwrap();
        let kern = &kernels[k];
        let e = emit(k + 1);
        let mut next: Vec<f64> = (0..n)
            .map(|s2| (0..n).map(|s| prev[s] * kern[[s, s2]]).sum::<f64>() * e[s2])
            .collect();
        if normalize(&mut next) <= 0.0 {
            return Err(Error::ImpossibleEvidence { step: k + 1 });
        }
        forward.push(next);
    }

    // backward pass and marginals
    let mut marginals = vec![vec![0.0; n]; k_steps + 1];
    let mut b = vec![1.0; n];
    for k in (0..=k_steps).rev() {
        let mut marg: Vec<f64> = (0..n).map(|s| forward[k][s] * b[s]).collect();
        if normalize(&mut marg) <= 0.0 {
            return Err(Error::ImpossibleEvidence { step: k });
        }
        marginals[k] = marg;
        if k > 0 {
            let kern = &kernels[k - 1];
            let e = emit(k);
            let mut next: Vec<f64> = (0..n)
                .map(|s| (0..n).map(|s2| kern[[s, s2]] * e[s2] * b[s2]).sum())
                .collect();
            normalize(&mut next);
            b = next;
        }
    }

    Ok(GridPosterior {
        step,
        times,
        marginals,
    })
}

/// Grid posterior for point observations: each observation is assigned to
/// the nearest grid time (the step is expected to separate observations).
pub fn grid_posterior(model: &IntensityModel, evidence: &Evidence, step: f64) -> Result<GridPosterior> {
    evidence.check_against(model)?;
    let span = model.tmax() - model.tmin();
    let k_steps = (span / step).round() as usize;
    let mut emissions: Vec<Vec<f64>> = vec![vec![0.0; model.n_states()]; k_steps + 1];
    for (j, &t) in evidence.obs_times().iter().enumerate() {
        let k = (((t - model.tmin()) / step).round() as usize).min(k_steps);
        for s in 0..model.n_states() {
            emissions[k][s] += evidence.log_lik(j)[s];
        }
    }
    grid_smoothing(model, step, &move |k, _t, s| emissions[k][s])
}

/// Richardson extrapolation of a first-order-in-step marginal: combines the
/// coarse (step Δ) and fine (step Δ/2) values to `2*fine - coarse`, clipped
/// to the simplex. Returns the extrapolated distribution and the maximum
/// absolute coarse/fine discrepancy, a practical bound on the remaining
/// discretization error.
pub fn richardson_extrapolate(coarse: &[f64], fine: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(coarse.len(), fine.len());
    let mut out: Vec<f64> = coarse
        .iter()
        .zip(fine)
        .map(|(&c, &f)| (2.0 * f - c).max(0.0))
        .collect();
    normalize(&mut out);
    let diff = coarse
        .iter()
        .zip(fine)
        .map(|(&c, &f)| (c - f).abs())
        .fold(0.0, f64::max);
    (out, diff)
}

/// Exhaustive joint distribution over all skeleton assignments.
#[derive(Debug, Clone)]
pub struct EnumeratedSkeletons {
    n_states: usize,
    positions: usize,
    probs: Vec<f64>,
    log_normalizer: f64,
}

impl EnumeratedSkeletons {
    pub fn n_outcomes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Flat index of a skeleton (first position is the most significant
    /// digit).
    pub fn index_of(&self, skeleton: &[usize]) -> usize {
        debug_assert_eq!(skeleton.len(), self.positions);
        skeleton.iter().fold(0, |acc, &s| acc * self.n_states + s)
    }

    pub fn prob(&self, skeleton: &[usize]) -> f64 {
        self.probs[self.index_of(skeleton)]
    }

    /// Exact marginal distribution of position `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut marg = vec![0.0; self.n_states];
        for (flat, &p) in self.probs.iter().enumerate() {
            let digit = flat / self.n_states.pow((self.positions - 1 - i) as u32) % self.n_states;
            marg[digit] += p;
        }
        marg
    }
}

/// Enumerates all `|S|^(N+1)` skeletons of the chain. Errors when the
/// outcome count exceeds `1e6`.
pub fn enumerate_skeletons(hmm: &SkeletonHmm) -> Result<EnumeratedSkeletons> {
    let n = hmm.n_states();
    let positions = hmm.n_steps() + 1;
    let outcomes = (n as f64).powi(positions as i32);
    if outcomes > 1e6 {
        return Err(Error::CapExceeded {
            size: outcomes as usize,
            cap: 1_000_000,
        });
    }
    let outcomes = outcomes as usize;
    let mut log_mass = vec![LOG_ZERO; outcomes];
    let mut skeleton = vec![0usize; positions];
    for (flat, lm) in log_mass.iter_mut().enumerate() {
        let mut rem = flat;
        for i in (0..positions).rev() {
            skeleton[i] = rem % n;
            rem /= n;
        }
        *lm = hmm.assignment_log_mass(&skeleton);
    }
    let log_normalizer = crate::math::log_sum_exp(&log_mass);
    if log_normalizer == LOG_ZERO {
        return Err(Error::ImpossibleEvidence { step: 0 });
    }
    let probs: Vec<f64> = log_mass.iter().map(|&lm| (lm - log_normalizer).exp()).collect();
    Ok(EnumeratedSkeletons {
        n_states: n,
        positions,
        probs,
        log_normalizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::StateSpace;
    use ndarray::array;

    fn symmetric_q() -> Array2<f64> {
        array![[0.0, 1.0], [1.0, 0.0]]
    }

    #[test]
    fn transition_probability_dt_zero_is_identity() {
        let p = transition_probability(&symmetric_q(), 0.0);
        assert_eq!(p, Array2::<f64>::eye(2));
    }

    #[test]
    fn transition_probability_two_state_closed_form() {
        // diagonal of exp(Q dt) is (1 + e^{-2 dt}) / 2 for the symmetric
        // rate-1 generator
        for &dt in &[0.1, 0.5, 2.0] {
            let p = transition_probability(&symmetric_q(), dt);
            let expect = 0.5 * (1.0 + (-2.0 * dt).exp());
            assert!((p[[0, 0]] - expect).abs() < 1e-13, "dt={dt}");
            assert!((p[[1, 1]] - expect).abs() < 1e-13);
        }
        let p = transition_probability(&symmetric_q(), 0.5);
        assert!((p[[0, 0]] - 0.683940).abs() < 1e-6);
    }

    #[test]
    fn transition_probability_converges_to_stationary() {
        let p = transition_probability(&symmetric_q(), 50.0);
        for s in 0..2 {
            for s2 in 0..2 {
                assert!((p[[s, s2]] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_probability_rows_sum_to_one() {
        let q = array![[0.0, 0.3, 1.7], [0.2, 0.0, 0.4], [2.0, 0.1, 0.0]];
        for &dt in &[0.01, 1.0, 7.0, 300.0] {
            let p = transition_probability(&q, dt);
            for s in 0..3 {
                let sum: f64 = (0..3).map(|s2| p[[s, s2]]).sum();
                assert!((sum - 1.0).abs() < 1e-12, "dt={dt} s={s} sum={sum}");
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let q = array![[0.0, 0.7, 0.2], [1.1, 0.0, 0.4], [0.3, 0.9, 0.0]];
        for &(s, t) in &[(0.3, 0.7), (2.0, 5.0), (10.0, 10.0)] {
            let a = transition_probability(&q, s);
            let b = transition_probability(&q, t);
            let ab = a.dot(&b);
            let direct = transition_probability(&q, s + t);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((ab[[i, j]] - direct[[i, j]]).abs() < 1e-10);
                }
            }
        }
    }

    fn two_state_model() -> IntensityModel {
        IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![1.0, 0.0],
            0.0,
            1.0,
            symmetric_q(),
            Some(vec![2.0, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn grid_posterior_without_evidence_recovers_prior() {
        let m = two_state_model();
        let grid = grid_posterior(&m, &Evidence::none(), 1e-3).unwrap();
        for &t in &[0.0, 0.25, 0.5, 1.0] {
            let marg = grid.marginal_at(t);
            let prior = transition_probability(&symmetric_q(), t);
            // nu is a point mass at state 0
            assert!((marg[0] - prior[[0, 0]]).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn grid_posterior_hard_observation_forces_state() {
        let m = two_state_model();
        let evid = Evidence::new(vec![0.5], vec![vec![LOG_ZERO, 0.0]]).unwrap();
        let grid = grid_posterior(&m, &evid, 1e-3).unwrap();
        assert!((grid.marginal_at(0.5)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_posterior_self_convergence() {
        let m = two_state_model();
        let evid = Evidence::new(vec![0.3, 0.7], vec![vec![-0.2, -1.7], vec![-1.7, -0.2]]).unwrap();
        let coarse = grid_posterior(&m, &evid, 2e-3).unwrap();
        let fine = grid_posterior(&m, &evid, 1e-3).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            let (extrapolated, diff) = richardson_extrapolate(coarse.marginal_at(t), fine.marginal_at(t));
            // first-order self-convergence: the coarse/fine gap is O(step)
            assert!(diff < 2e-3 * 5.0, "diff={diff}");
            let s: f64 = extrapolated.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn enumerate_single_event() {
        let hmm = SkeletonHmm::new(vec![0.25, 0.75], vec![], vec![vec![0.0, (2.0f64).ln()]]).unwrap();
        let e = enumerate_skeletons(&hmm).unwrap();
        // normalized nu .* exp(g0): (.25, 1.5)/1.75
        assert!((e.prob(&[0]) - 0.25 / 1.75).abs() < 1e-14);
        assert!((e.prob(&[1]) - 1.5 / 1.75).abs() < 1e-14);
    }

    #[test]
    fn enumerate_uniform_symmetric() {
        let p = array![[0.5, 0.5], [0.5, 0.5]];
        let hmm =
            SkeletonHmm::new(vec![0.5, 0.5], vec![p; 3], vec![vec![0.0, 0.0]; 4]).unwrap();
        let e = enumerate_skeletons(&hmm).unwrap();
        for &pr in e.probs() {
            assert!((pr - 1.0 / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn enumeration_cap_enforced() {
        let n = 10usize;
        let p = Array2::from_elem((n, n), 1.0 / n as f64);
        let hmm = SkeletonHmm::new(
            vec![1.0 / n as f64; n],
            vec![p; 6],
            vec![vec![0.0; n]; 7],
        )
        .unwrap();
        assert!(matches!(
            enumerate_skeletons(&hmm),
            Err(Error::CapExceeded { .. })
        ));
    }
}

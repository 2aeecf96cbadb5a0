//! Forward filtering and backward sampling for the inhomogeneous skeleton
//! chain with multiplicative potentials, plus exact smoothing marginals.
//!
//! Filtering runs in log space with per-step max-subtraction: the potentials
//! carry `exp(-∫R)` survival factors which underflow on long windows if
//! multiplied naively.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{normalize, sample_categorical, LOG_ZERO};
use crate::mjp::{Evidence, IntensityModel};
use crate::thinning::thinning_probs;

/// Hidden Markov chain over skeleton states: initial law, one stochastic
/// matrix per step, and per-state log potentials `g_0..g_N`.
#[derive(Debug, Clone)]
pub struct SkeletonHmm {
    initial: Vec<f64>,
    trans: Vec<Array2<f64>>,
    log_pot: Vec<Vec<f64>>,
}

impl SkeletonHmm {
    pub fn new(initial: Vec<f64>, trans: Vec<Array2<f64>>, log_pot: Vec<Vec<f64>>) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::invalid("empty initial law"));
        }
        if log_pot.len() != trans.len() + 1 {
            return Err(Error::invalid("need one potential per event (N+1 total)"));
        }
        for p in &trans {
            if p.nrows() != n || p.ncols() != n {
                return Err(Error::invalid("transition matrix dimension mismatch"));
            }
            for s in 0..n {
                let row_sum: f64 = (0..n).map(|s2| p[[s, s2]]).sum();
                if (row_sum - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "transition row {s} sums to {row_sum}"
                    )));
                }
            }
        }
        for g in &log_pot {
            if g.len() != n {
                return Err(Error::invalid("potential dimension mismatch"));
            }
        }
        Ok(SkeletonHmm {
            initial,
            trans,
            log_pot,
        })
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    /// Number of transitions `N`; the chain has `N + 1` positions.
    pub fn n_steps(&self) -> usize {
        self.trans.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, i: usize) -> &Array2<f64> {
        &self.trans[i]
    }

    pub fn log_potential(&self, i: usize) -> &[f64] {
        &self.log_pot[i]
    }

    /// Replaces every potential with zero. Deliberately wrong: used by the
    /// diagnostics mutation test to confirm the invariance battery catches a
    /// kernel that ignores the potentials.
    pub fn without_potentials(&self) -> SkeletonHmm {
        SkeletonHmm {
            initial: self.initial.clone(),
            trans: self.trans.clone(),
            log_pot: vec![vec![0.0; self.n_states()]; self.log_pot.len()],
        }
    }

    /// Total log mass of one skeleton assignment.
    pub fn assignment_log_mass(&self, skeleton: &[usize]) -> f64 {
        debug_assert_eq!(skeleton.len(), self.n_steps() + 1);
        let mut ld = if self.initial[skeleton[0]] > 0.0 {
            self.initial[skeleton[0]].ln()
        } else {
            LOG_ZERO
        };
        ld += self.log_pot[0][skeleton[0]];
        for i in 1..skeleton.len() {
            let p = self.trans[i - 1][[skeleton[i - 1], skeleton[i]]];
            ld += if p > 0.0 { p.ln() } else { LOG_ZERO };
            ld += self.log_pot[i][skeleton[i]];
        }
        ld
    }
}

/// Builds the skeleton HMM for potential jump times `times` (with
/// `times[0] = tmin`) under a model and point observations. Transition `i`
/// is the thinning matrix at `times[i]`; the potential of segment
/// `[times[i-1], times[i])` collects the arrival factor, the survival
/// integral and the log likelihood of observations falling in the half-open
/// segment. An observation exactly at `tmax` joins the last segment.
pub fn build_skeleton_hmm(
    model: &IntensityModel,
    times: &[f64],
    evidence: &Evidence,
) -> Result<SkeletonHmm> {
    if times.is_empty() || times[0] != model.tmin() {
        return Err(Error::invalid("times must start at tmin"));
    }
    evidence.check_against(model)?;
    let n = model.n_states();
    let n_events = times.len();
    let obs = evidence.obs_times();

    let mut trans = Vec::with_capacity(n_events - 1);
    let mut log_pot = vec![vec![0.0; n]; n_events];

    // Observations are assigned to segments by the half-open rule
    // [times[i-1], times[i]); a cursor walks them once.
    let mut j = 0usize;
    for i in 1..n_events {
        let lo = times[i - 1];
        let hi = times[i];
        if !(hi > lo) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        trans.push(thinning_probs(model, hi));
        let g = &mut log_pot[i - 1];
        for s in 0..n {
            let r = model.r_rate(hi, s);
            g[s] += if r > 0.0 { r.ln() } else { LOG_ZERO };
            g[s] -= model.integrate_r(lo, hi, s);
        }
        while j < obs.len() && obs[j] < hi {
            debug_assert!(obs[j] >= lo);
            let table = evidence.log_lik(j);
            for s in 0..n {
                g[s] += table[s];
            }
            j += 1;
        }
    }
    // Final segment [times[N], tmax], including any observation at tmax.
    let last = &mut log_pot[n_events - 1];
    let lo = times[n_events - 1];
    for s in 0..n {
        last[s] -= model.integrate_r(lo, model.tmax(), s);
    }
    while j < obs.len() {
        let table = evidence.log_lik(j);
        for s in 0..n {
            last[s] += table[s];
        }
        j += 1;
    }

    SkeletonHmm::new(model.nu().to_vec(), trans, log_pot)
}

/// Normalized filtered distributions and the total log normalizer.
#[derive(Debug, Clone)]
pub struct Filtered {
    alphas: Vec<Vec<f64>>,
    log_normalizer: f64,
}

impl Filtered {
    pub fn alpha(&self, i: usize) -> &[f64] {
        &self.alphas[i]
    }

    pub fn last(&self) -> &[f64] {
        self.alphas.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `log Σ_S exp(total log mass)` over all skeletons.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }
}

/// Forward pass. Errors with `ImpossibleEvidence` when some step has zero
/// total mass.
pub fn forward_filter(hmm: &SkeletonHmm) -> Result<Filtered> {
    let n = hmm.n_states();
    let steps = hmm.n_steps();
    let mut alphas = Vec::with_capacity(steps + 1);
    let mut log_normalizer = 0.0;

    let mut log_alpha: Vec<f64> = (0..n)
        .map(|s| {
            let p = hmm.initial()[s];
            (if p > 0.0 { p.ln() } else { LOG_ZERO }) + hmm.log_potential(0)[s]
        })
        .collect();
    log_normalizer += push_normalized(&mut alphas, &log_alpha, 0)?;

    for i in 1..=steps {
        let prev = alphas.last().unwrap().clone();
        let p = hmm.transition(i - 1);
        let g = hmm.log_potential(i);
        for s2 in 0..n {
            let lin: f64 = (0..n).map(|s| prev[s] * p[[s, s2]]).sum();
            log_alpha[s2] = if lin > 0.0 { lin.ln() } else { LOG_ZERO } + g[s2];
        }
        log_normalizer += push_normalized(&mut alphas, &log_alpha, i)?;
    }
    Ok(Filtered {
        alphas,
        log_normalizer,
    })
}

fn push_normalized(alphas: &mut Vec<Vec<f64>>, log_alpha: &[f64], step: usize) -> Result<f64> {
    let m = log_alpha.iter().copied().fold(LOG_ZERO, f64::max);
    if m == LOG_ZERO {
        return Err(Error::ImpossibleEvidence { step });
    }
    let mut lin: Vec<f64> = log_alpha.iter().map(|&la| (la - m).exp()).collect();
    let sum = normalize(&mut lin);
    alphas.push(lin);
    Ok(m + sum.ln())
}

/// Backward pass: draws one skeleton from the exact conditional law.
pub fn backward_sample<R: Rng + ?Sized>(
    hmm: &SkeletonHmm,
    filtered: &Filtered,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = hmm.n_states();
    let steps = hmm.n_steps();
    let mut skeleton = vec![0usize; steps + 1];
    skeleton[steps] = sample_categorical(filtered.last(), rng)
        .ok_or(Error::ImpossibleEvidence { step: steps })?;
    let mut weights = vec![0.0; n];
    for i in (0..steps).rev() {
        let alpha = filtered.alpha(i);
        let p = hmm.transition(i);
        let next = skeleton[i + 1];
        for s in 0..n {
            weights[s] = alpha[s] * p[[s, next]];
        }
        skeleton[i] =
            sample_categorical(&weights, rng).ok_or(Error::ImpossibleEvidence { step: i })?;
    }
    Ok(skeleton)
}

/// Exact per-position smoothing marginals by forward-backward.
pub fn smoothing_marginals(hmm: &SkeletonHmm) -> Result<Vec<Vec<f64>>> {
    let filtered = forward_filter(hmm)?;
    let n = hmm.n_states();
    let steps = hmm.n_steps();
    let mut log_beta = vec![0.0; n];
    let mut marginals = vec![vec![0.0; n]; steps + 1];

    for i in (0..=steps).rev() {
        let alpha = filtered.alpha(i);
        let m = log_beta.iter().copied().fold(LOG_ZERO, f64::max);
        let mut marg: Vec<f64> = (0..n)
            .map(|s| {
                if log_beta[s] == LOG_ZERO {
                    0.0
                } else {
                    alpha[s] * (log_beta[s] - m).exp()
                }
            })
            .collect();
        if normalize(&mut marg) <= 0.0 {
            return Err(Error::ImpossibleEvidence { step: i });
        }
        marginals[i] = marg;
        if i > 0 {
            let p = hmm.transition(i - 1);
            let g = hmm.log_potential(i);
            let x: Vec<f64> = (0..n).map(|s2| g[s2] + log_beta[s2]).collect();
            let mx = x.iter().copied().fold(LOG_ZERO, f64::max);
            if mx == LOG_ZERO {
                return Err(Error::ImpossibleEvidence { step: i });
            }
            let expx: Vec<f64> = x.iter().map(|&v| (v - mx).exp()).collect();
            let mut next_beta = vec![LOG_ZERO; n];
            for s in 0..n {
                let lin: f64 = (0..n).map(|s2| p[[s, s2]] * expx[s2]).sum();
                next_beta[s] = if lin > 0.0 { lin.ln() + mx } else { LOG_ZERO };
            }
            log_beta = next_beta;
        }
    }
    Ok(marginals)
}

//! Core representations for finite-state Markov jump processes on a bounded
//! time window: right-continuous piecewise-constant trajectories, the
//! redundant event-sequence form (potential jump times plus skeleton), the
//! intensity model, and noisy point observations.
//!
//! All types are immutable after construction and shareable across chains.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::events::RateFunction;
use crate::math::LOG_ZERO;

/// Relative tie tolerance: jump times closer than this fraction of the window
/// length are rejected as degenerate (ties have probability zero under the
/// model; samplers resample on collision instead of emitting them).
pub const TIE_REL_TOL: f64 = 1e-12;

/// Ordered set of state labels. States are dense indices `0..size` everywhere
/// in the crate; labels only matter at the file-format boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("state space must be nonempty"));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::invalid(format!("duplicate state label {a:?}")));
            }
        }
        Ok(StateSpace { labels })
    }

    /// Anonymous labels `s0..s{n-1}`.
    pub fn of_size(n: usize) -> Self {
        StateSpace {
            labels: (0..n).map(|i| format!("s{i}")).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, s: usize) -> &str {
        &self.labels[s]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Right-continuous piecewise-constant path on `[tmin, tmax]`, stored in
/// compact form: strictly increasing interior jump times and one state per
/// segment, with consecutive states distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    tmin: f64,
    tmax: f64,
    jump_times: Vec<f64>,
    states: Vec<usize>,
}

impl Trajectory {
    pub fn new(tmin: f64, tmax: f64, jump_times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        check_window(tmin, tmax)?;
        if states.len() != jump_times.len() + 1 {
            return Err(Error::invalid(format!(
                "need {} states for {} jump times, got {}",
                jump_times.len() + 1,
                jump_times.len(),
                states.len()
            )));
        }
        let tie = TIE_REL_TOL * (tmax - tmin);
        let mut prev = tmin;
        for &t in &jump_times {
            if !t.is_finite() || t <= tmin || t >= tmax {
                return Err(Error::invalid(format!(
                    "jump time {t} outside ({tmin}, {tmax})"
                )));
            }
            if t - prev < tie {
                return Err(Error::invalid(format!(
                    "degenerate spacing at jump time {t} (gap {} < {tie})",
                    t - prev
                )));
            }
            prev = t;
        }
        if !jump_times.is_empty() && tmax - prev < tie {
            return Err(Error::invalid("jump time degenerately close to tmax".to_string()));
        }
        for w in states.windows(2) {
            if w[0] == w[1] {
                return Err(Error::invalid(
                    "consecutive states equal; compact form stores true jumps only",
                ));
            }
        }
        Ok(Trajectory {
            tmin,
            tmax,
            jump_times,
            states,
        })
    }

    pub fn constant(tmin: f64, tmax: f64, state: usize) -> Result<Self> {
        Trajectory::new(tmin, tmax, vec![], vec![state])
    }

    pub fn tmin(&self) -> f64 {
        self.tmin
    }

    pub fn tmax(&self) -> f64 {
        self.tmax
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// State at time `t`, right-continuous at jump points.
    pub fn evaluate(&self, t: f64) -> Result<usize> {
        if !(t >= self.tmin && t <= self.tmax) {
            return Err(Error::TimeOutOfRange {
                t,
                tmin: self.tmin,
                tmax: self.tmax,
            });
        }
        let idx = self.jump_times.partition_point(|&jt| jt <= t);
        Ok(self.states[idx])
    }

    /// Number of true jumps plus one (the initial index is always counted,
    /// so a constant path reports 1).
    pub fn jump_count(&self) -> usize {
        self.jump_times.len() + 1
    }

    /// Number of actual state transitions (`jump_count() - 1`).
    pub fn transitions(&self) -> usize {
        self.jump_times.len()
    }

    /// Constant segments as `(start, end, state)`, covering `[tmin, tmax]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.states.len()).map(move |i| {
            let a = if i == 0 { self.tmin } else { self.jump_times[i - 1] };
            let b = if i == self.jump_times.len() {
                self.tmax
            } else {
                self.jump_times[i]
            };
            (a, b, self.states[i])
        })
    }

    /// Total time spent in `state`.
    pub fn occupation_time(&self, state: usize) -> f64 {
        self.segments()
            .filter(|&(_, _, s)| s == state)
            .map(|(a, b, _)| b - a)
            .sum()
    }
}

/// Redundant representation of a trajectory: potential jump times `T` with
/// `T[0] = tmin`, and a skeleton of states of the same length. Adjacent equal
/// states mark virtual jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    tmax: f64,
    times: Vec<f64>,
    states: Vec<usize>,
}

impl EventSequence {
    pub fn new(tmin: f64, tmax: f64, times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        check_window(tmin, tmax)?;
        if times.is_empty() || times[0] != tmin {
            return Err(Error::invalid("event times must start at tmin"));
        }
        if states.len() != times.len() {
            return Err(Error::invalid("skeleton length must equal event count"));
        }
        let tie = TIE_REL_TOL * (tmax - tmin);
        for w in times.windows(2) {
            if !(w[1] > w[0]) || w[1] - w[0] < tie {
                return Err(Error::invalid(format!(
                    "event times not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        if *times.last().unwrap() >= tmax {
            return Err(Error::invalid("event times must lie in [tmin, tmax)"));
        }
        Ok(EventSequence { tmax, times, states })
    }

    pub fn tmin(&self) -> f64 {
        self.times[0]
    }

    pub fn tmax(&self) -> f64 {
        self.tmax
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least T_0 by construction
    }

    pub fn evaluate(&self, t: f64) -> Result<usize> {
        if !(t >= self.tmin() && t <= self.tmax) {
            return Err(Error::TimeOutOfRange {
                t,
                tmin: self.tmin(),
                tmax: self.tmax,
            });
        }
        let idx = self.times.partition_point(|&et| et <= t);
        Ok(self.states[idx - 1])
    }

    /// Drops virtual jumps (adjacent equal states), producing the unique
    /// compact trajectory with the same evaluate function. Idempotent.
    pub fn compact(&self) -> Trajectory {
        let mut jump_times = Vec::new();
        let mut states = vec![self.states[0]];
        for i in 1..self.times.len() {
            if self.states[i] != self.states[i - 1] {
                jump_times.push(self.times[i]);
                states.push(self.states[i]);
            }
        }
        Trajectory {
            tmin: self.times[0],
            tmax: self.tmax,
            jump_times,
            states,
        }
    }
}

fn check_window(tmin: f64, tmax: f64) -> Result<()> {
    if !tmin.is_finite() || !tmax.is_finite() || !(tmax > tmin) {
        return Err(Error::invalid(format!("bad time window [{tmin}, {tmax}]")));
    }
    Ok(())
}

/// Transition intensities `Q(t; s, s')`, instrumental intensities `R(t; s)`
/// and initial distribution of a (possibly time-inhomogeneous) MJP. Both
/// intensity families are piecewise constant in `t` over shared breakpoints,
/// so holding-time sampling and rate integrals are exact.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    states: StateSpace,
    nu: Vec<f64>,
    tmin: f64,
    tmax: f64,
    /// Interior block boundaries, strictly inside `(tmin, tmax)`.
    breakpoints: Vec<f64>,
    /// Off-diagonal rates per block; diagonals are ignored on input and
    /// stored as zero.
    q_blocks: Vec<Array2<f64>>,
    /// Total leaving rate per block and state.
    leaving: Vec<Vec<f64>>,
    /// Instrumental rate per block and state.
    r_blocks: Vec<Vec<f64>>,
}

impl IntensityModel {
    /// Builds a model. `r_blocks = None` applies the default instrumental
    /// intensity `R(t;s) = 2 * max(Q(t;s), q_floor)` with
    /// `q_floor = 1e-6 * max_{t,s} Q(t;s)`, i.e. a thinning margin of 1/2.
    pub fn new(
        states: StateSpace,
        nu: Vec<f64>,
        tmin: f64,
        tmax: f64,
        breakpoints: Vec<f64>,
        q_blocks: Vec<Array2<f64>>,
        r_blocks: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        check_window(tmin, tmax)?;
        let n = states.size();
        if nu.len() != n {
            return Err(Error::invalid("nu length must equal state count"));
        }
        if nu.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("nu entries must be finite and nonnegative"));
        }
        let total: f64 = nu.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("nu sums to {total}, expected 1")));
        }
        let mut prev = tmin;
        for &b in &breakpoints {
            if !(b > prev) || b >= tmax {
                return Err(Error::invalid("breakpoints must be sorted inside (tmin, tmax)"));
            }
            prev = b;
        }
        let n_blocks = breakpoints.len() + 1;
        if q_blocks.len() != n_blocks {
            return Err(Error::invalid(format!(
                "expected {n_blocks} Q blocks, got {}",
                q_blocks.len()
            )));
        }
        let mut q_clean = Vec::with_capacity(n_blocks);
        let mut leaving = Vec::with_capacity(n_blocks);
        for q in &q_blocks {
            if q.nrows() != n || q.ncols() != n {
                return Err(Error::invalid("Q block dimension mismatch"));
            }
            let mut qb = Array2::zeros((n, n));
            let mut lv = vec![0.0; n];
            for s in 0..n {
                for s2 in 0..n {
                    if s == s2 {
                        continue;
                    }
                    let rate = q[[s, s2]];
                    if !rate.is_finite() || rate < 0.0 {
                        return Err(Error::invalid(format!(
                            "Q({s},{s2}) = {rate} must be finite and nonnegative"
                        )));
                    }
                    qb[[s, s2]] = rate;
                    lv[s] += rate;
                }
            }
            q_clean.push(qb);
            leaving.push(lv);
        }
        let r_blocks = match r_blocks {
            Some(r) => {
                if r.len() != n_blocks || r.iter().any(|b| b.len() != n) {
                    return Err(Error::invalid("R block dimension mismatch"));
                }
                for b in &r {
                    for &v in b {
                        if !v.is_finite() || v < 0.0 {
                            return Err(Error::invalid(format!(
                                "R value {v} must be finite and nonnegative"
                            )));
                        }
                    }
                }
                r
            }
            None => {
                let q_max = leaving
                    .iter()
                    .flat_map(|b| b.iter().copied())
                    .fold(0.0, f64::max);
                let floor = q_max * 1e-6;
                leaving
                    .iter()
                    .map(|b| b.iter().map(|&q| 2.0 * q.max(floor)).collect())
                    .collect()
            }
        };
        Ok(IntensityModel {
            states,
            nu,
            tmin,
            tmax,
            breakpoints,
            q_blocks: q_clean,
            leaving,
            r_blocks,
        })
    }

    /// Convenience constructor for a time-homogeneous model (single block).
    pub fn homogeneous(
        states: StateSpace,
        nu: Vec<f64>,
        tmin: f64,
        tmax: f64,
        q: Array2<f64>,
        r: Option<Vec<f64>>,
    ) -> Result<Self> {
        IntensityModel::new(states, nu, tmin, tmax, vec![], vec![q], r.map(|v| vec![v]))
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.size()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn tmin(&self) -> f64 {
        self.tmin
    }

    pub fn tmax(&self) -> f64 {
        self.tmax
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn n_blocks(&self) -> usize {
        self.q_blocks.len()
    }

    pub fn q_block(&self, b: usize) -> &Array2<f64> {
        &self.q_blocks[b]
    }

    /// Index of the block whose half-open interval contains `t`
    /// (right-continuous; `t = tmax` maps to the last block).
    pub fn block_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    /// Half-open span `[a, b)` of block `b` (the last block closes at tmax).
    pub fn block_span(&self, b: usize) -> (f64, f64) {
        let a = if b == 0 { self.tmin } else { self.breakpoints[b - 1] };
        let z = if b == self.breakpoints.len() {
            self.tmax
        } else {
            self.breakpoints[b]
        };
        (a, z)
    }

    /// Transition rate `Q(t; s, s')` for `s != s'`.
    pub fn q_rate(&self, t: f64, s: usize, s2: usize) -> f64 {
        self.q_blocks[self.block_index(t)][[s, s2]]
    }

    /// Total leaving rate `Q(t; s)`.
    pub fn leaving_rate(&self, t: f64, s: usize) -> f64 {
        self.leaving[self.block_index(t)][s]
    }

    /// Instrumental rate `R(t; s)`.
    pub fn r_rate(&self, t: f64, s: usize) -> f64 {
        self.r_blocks[self.block_index(t)][s]
    }

    /// Instrumental rate of state `s` as a standalone piecewise-constant
    /// function on the model window.
    pub fn r_rate_fn(&self, s: usize) -> RateFunction {
        let mut starts = vec![self.tmin];
        starts.extend_from_slice(&self.breakpoints);
        let values = self.r_blocks.iter().map(|b| b[s]).collect();
        RateFunction::new(starts, values, self.tmax).expect("model blocks are valid")
    }

    /// `∫_a^b R(t; s) dt`, exact over constant blocks.
    pub fn integrate_r(&self, a: f64, b: f64, s: usize) -> f64 {
        self.integrate_blocks(a, b, |blk| self.r_blocks[blk][s])
    }

    /// `∫_a^b Q(t; s) dt`, exact over constant blocks.
    pub fn integrate_leaving(&self, a: f64, b: f64, s: usize) -> f64 {
        self.integrate_blocks(a, b, |blk| self.leaving[blk][s])
    }

    fn integrate_blocks(&self, a: f64, b: f64, value: impl Fn(usize) -> f64) -> f64 {
        debug_assert!(b >= a);
        let mut total = 0.0;
        let mut lo = a;
        let mut blk = self.block_index(a);
        while lo < b {
            let (_, span_end) = self.block_span(blk);
            let hi = span_end.min(b);
            total += value(blk) * (hi - lo);
            lo = hi;
            blk += 1;
        }
        total
    }

    /// Entrywise minimum of the off-diagonal rates over all blocks.
    pub fn q_min(&self) -> Array2<f64> {
        let n = self.n_states();
        let mut m = self.q_blocks[0].clone();
        for q in &self.q_blocks[1..] {
            for s in 0..n {
                for s2 in 0..n {
                    if q[[s, s2]] < m[[s, s2]] {
                        m[[s, s2]] = q[[s, s2]];
                    }
                }
            }
        }
        m
    }

    /// Largest instrumental rate over blocks and states.
    pub fn r_max(&self) -> f64 {
        self.r_blocks
            .iter()
            .flat_map(|b| b.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Checks the ergodicity preconditions for the trajectory sampler:
    /// an irreducible entrywise lower bound on `Q`, the thinning margin
    /// `Q(t;s)/R(t;s) <= 1 - eta`, and a finite bound on `R`. Failures are
    /// localized to the offending block time and state.
    pub fn validate(&self, eta: f64) -> ValidationReport {
        let n = self.n_states();
        let mut failures = Vec::new();
        if !(eta > 0.0 && eta < 1.0) {
            failures.push(AssumptionFailure {
                assumption: Assumption::WellFormed,
                time: None,
                state: None,
                detail: format!("eta = {eta} must lie in (0, 1)"),
            });
        }
        if n < 2 {
            failures.push(AssumptionFailure {
                assumption: Assumption::WellFormed,
                time: None,
                state: None,
                detail: "samplers require at least 2 states".to_string(),
            });
        }
        let q_min = self.q_min();
        let q_min_irreducible = is_irreducible(&q_min);
        if !q_min_irreducible {
            failures.push(AssumptionFailure {
                assumption: Assumption::IrreducibleMinRates,
                time: None,
                state: None,
                detail: "entrywise minimum of Q over time blocks is reducible".to_string(),
            });
        }
        let mut achieved_eta = 1.0f64;
        let mut r_max = 0.0f64;
        for blk in 0..self.n_blocks() {
            let (t0, _) = self.block_span(blk);
            for s in 0..n {
                let q = self.leaving[blk][s];
                let r = self.r_blocks[blk][s];
                if !r.is_finite() {
                    failures.push(AssumptionFailure {
                        assumption: Assumption::BoundedInstrumentalRate,
                        time: Some(t0),
                        state: Some(s),
                        detail: format!("R = {r} is not finite"),
                    });
                    continue;
                }
                r_max = r_max.max(r);
                if r <= 0.0 {
                    failures.push(AssumptionFailure {
                        assumption: Assumption::IntensityDominationMargin,
                        time: Some(t0),
                        state: Some(s),
                        detail: "R must be strictly positive".to_string(),
                    });
                    achieved_eta = 0.0;
                    continue;
                }
                let ratio = q / r;
                achieved_eta = achieved_eta.min(1.0 - ratio);
                if eta > 0.0 && eta < 1.0 && ratio > 1.0 - eta + 1e-15 {
                    failures.push(AssumptionFailure {
                        assumption: Assumption::IntensityDominationMargin,
                        time: Some(t0),
                        state: Some(s),
                        detail: format!("Q/R = {ratio:.6} exceeds 1 - eta = {:.6}", 1.0 - eta),
                    });
                }
            }
        }
        ValidationReport {
            eta,
            achieved_eta,
            q_min,
            q_min_irreducible,
            r_max,
            failures,
        }
    }

    /// Log density of a compact trajectory under the prior MJP law
    /// (`nu`, `Q`): initial mass, one rate factor per true jump, and the
    /// survival integral of the leaving rate.
    pub fn path_log_density(&self, traj: &Trajectory) -> f64 {
        let mut ld = ln_or_zero(self.nu[traj.states()[0]]);
        for i in 1..traj.states().len() {
            let t = traj.jump_times()[i - 1];
            ld += ln_or_zero(self.q_rate(t, traj.states()[i - 1], traj.states()[i]));
        }
        for (a, b, s) in traj.segments() {
            ld -= self.integrate_leaving(a, b, s);
        }
        ld
    }
}

pub(crate) fn ln_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        LOG_ZERO
    }
}

/// True when the digraph of strictly positive off-diagonal entries is
/// strongly connected.
pub fn is_irreducible(rates: &Array2<f64>) -> bool {
    let n = rates.nrows();
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    let forward = reachable(rates, false);
    let backward = reachable(rates, true);
    forward.iter().all(|&r| r) && backward.iter().all(|&r| r)
}

fn reachable(rates: &Array2<f64>, transpose: bool) -> Vec<bool> {
    let n = rates.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            let rate = if transpose { rates[[v, u]] } else { rates[[u, v]] };
            if u != v && rate > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Which precondition of the sampler's ergodicity analysis failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Entrywise minimum of `Q` over time must be irreducible.
    IrreducibleMinRates,
    /// `Q(t;s)/R(t;s) <= 1 - eta` for a declared margin `eta > 0`.
    IntensityDominationMargin,
    /// `R(t;s)` uniformly bounded.
    BoundedInstrumentalRate,
    /// Support of the conditional rates must not depend on the parent
    /// configuration (network models only).
    SupportInvariance,
    /// Structural precondition outside the numbered assumptions.
    WellFormed,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Assumption::IrreducibleMinRates => "irreducible minimum rates",
            Assumption::IntensityDominationMargin => "intensity domination margin",
            Assumption::BoundedInstrumentalRate => "bounded instrumental rate",
            Assumption::SupportInvariance => "support invariance across parent configurations",
            Assumption::WellFormed => "well-formed model",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionFailure {
    pub assumption: Assumption,
    pub time: Option<f64>,
    pub state: Option<usize>,
    pub detail: String,
}

impl std::fmt::Display for AssumptionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.assumption)?;
        if let Some(t) = self.time {
            write!(f, " at t={t}")?;
        }
        if let Some(s) = self.state {
            write!(f, " state {s}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Outcome of [`IntensityModel::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Margin the model was checked against.
    pub eta: f64,
    /// Largest margin the model actually achieves, `1 - max Q/R`.
    pub achieved_eta: f64,
    /// Entrywise minimum of the off-diagonal rates over time blocks.
    pub q_min: Array2<f64>,
    pub q_min_irreducible: bool,
    pub r_max: f64,
    pub failures: Vec<AssumptionFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Validation(self.to_string()))
        }
    }

    /// Smallest total leaving rate of the minimum-rate matrix.
    pub fn q_min_leaving(&self) -> f64 {
        let n = self.q_min.nrows();
        (0..n)
            .map(|s| (0..n).filter(|&s2| s2 != s).map(|s2| self.q_min[[s, s2]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            writeln!(
                f,
                "pass: q_min irreducible, achieved eta {:.6}, r_max {:.6}",
                self.achieved_eta, self.r_max
            )?;
        } else {
            for failure in &self.failures {
                writeln!(f, "fail: {failure}")?;
            }
        }
        Ok(())
    }
}

/// Noisy observations of the hidden path at fixed time points: per
/// observation, a log-likelihood value for every hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    obs_times: Vec<f64>,
    log_lik: Vec<Vec<f64>>,
}

impl Evidence {
    pub fn new(obs_times: Vec<f64>, log_lik: Vec<Vec<f64>>) -> Result<Self> {
        if obs_times.len() != log_lik.len() {
            return Err(Error::invalid("one log-likelihood table per observation"));
        }
        for w in obs_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("observation times must be strictly increasing"));
            }
        }
        for (j, table) in log_lik.iter().enumerate() {
            if table.is_empty() {
                return Err(Error::invalid(format!("empty log-likelihood table at {j}")));
            }
            if !table.iter().any(|&v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "observation {j} contradicts every state (no finite log-likelihood)"
                )));
            }
            if table.iter().any(|&v| v.is_nan() || v == f64::INFINITY) {
                return Err(Error::invalid(format!(
                    "log-likelihood table {j} has NaN or +inf entries"
                )));
            }
        }
        Ok(Evidence { obs_times, log_lik })
    }

    /// No observations: the posterior is the prior.
    pub fn none() -> Self {
        Evidence {
            obs_times: vec![],
            log_lik: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.obs_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_times.is_empty()
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn log_lik(&self, j: usize) -> &[f64] {
        &self.log_lik[j]
    }

    /// Total observation log-likelihood of a trajectory.
    pub fn log_likelihood(&self, traj: &Trajectory) -> Result<f64> {
        let mut total = 0.0;
        for (j, &t) in self.obs_times.iter().enumerate() {
            let s = traj.evaluate(t)?;
            total += self.log_lik[j][s];
        }
        Ok(total)
    }

    pub fn check_against(&self, model: &IntensityModel) -> Result<()> {
        for (j, table) in self.log_lik.iter().enumerate() {
            if table.len() != model.n_states() {
                return Err(Error::invalid(format!(
                    "log-likelihood table {j} has {} entries for {} states",
                    table.len(),
                    model.n_states()
                )));
            }
        }
        if let (Some(&first), Some(&last)) = (self.obs_times.first(), self.obs_times.last()) {
            if first < model.tmin() || last > model.tmax() {
                return Err(Error::invalid(
                    "observation times outside the model window".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Generative discrete observation model: at each observation time the
/// hidden state emits a symbol with row-stochastic probabilities. Turns
/// sampled symbols into [`Evidence`] tables and supports resampling the
/// data given a trajectory, which joint-distribution tests need.
#[derive(Debug, Clone)]
pub struct EmissionModel {
    obs_times: Vec<f64>,
    /// `emission[s][y]` = probability of symbol `y` in state `s`.
    emission: Vec<Vec<f64>>,
}

impl EmissionModel {
    pub fn new(obs_times: Vec<f64>, emission: Vec<Vec<f64>>) -> Result<Self> {
        if emission.is_empty() {
            return Err(Error::invalid("emission matrix must be nonempty"));
        }
        let n_symbols = emission[0].len();
        if n_symbols == 0 {
            return Err(Error::invalid("emission matrix needs at least one symbol"));
        }
        for row in &emission {
            if row.len() != n_symbols {
                return Err(Error::invalid("ragged emission matrix"));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid("emission probabilities must be nonnegative"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("emission row sums to {s}")));
            }
        }
        for w in obs_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("observation times must be strictly increasing"));
            }
        }
        Ok(EmissionModel { obs_times, emission })
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn n_symbols(&self) -> usize {
        self.emission[0].len()
    }

    pub fn n_states(&self) -> usize {
        self.emission.len()
    }

    /// Draws one symbol per observation time from the trajectory's states.
    pub fn sample<R: rand::Rng + ?Sized>(
        &self,
        traj: &Trajectory,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.obs_times
            .iter()
            .map(|&t| {
                let s = traj.evaluate(t)?;
                crate::math::sample_categorical(&self.emission[s], rng)
                    .ok_or_else(|| Error::invalid("emission row has zero mass"))
            })
            .collect()
    }

    /// Evidence tables for observed symbols `ys`.
    pub fn evidence_for(&self, ys: &[usize]) -> Result<Evidence> {
        if ys.len() != self.obs_times.len() {
            return Err(Error::invalid("one symbol per observation time"));
        }
        let tables = ys
            .iter()
            .map(|&y| {
                if y >= self.n_symbols() {
                    return Err(Error::invalid(format!("symbol {y} out of range")));
                }
                Ok(self.emission.iter().map(|row| ln_or_zero(row[y])).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Evidence::new(self.obs_times.clone(), tables)
    }
}

//! Random-scan Gibbs sampling over unobserved network nodes: each scan picks
//! a node and redraws its whole trajectory from the full conditional given
//! every other node, using the trajectory kernel machinery with potentials
//! that carry the children's conditional densities.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::events::{sample_poisson_process, RateFunction};
use crate::ffbs::{backward_sample, forward_filter, SkeletonHmm};
use crate::math::{sample_categorical, sample_exp1, LOG_ZERO};
use crate::mjp::{Evidence, EventSequence, Trajectory, TIE_REL_TOL};
use crate::raoteh::chain_rng;

use super::model::{CtbnModel, InitialLaw};
use super::path::{path_log_density, CtbnPath};

/// Auxiliary event times for node `w`: a Poisson process with rate
/// `R_w(X_w(t)) - Q_w(parents(t); X_w(t))` on each piece where both the node
/// state and the parent configuration are constant, merged with the node's
/// retained jump times and `tmin`.
pub fn resample_virtual_node<R: Rng + ?Sized>(
    model: &CtbnModel,
    path: &CtbnPath,
    w: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let node = model.node(w);
    let tie = TIE_REL_TOL * (path.tmax() - path.tmin());
    let parent_jumps = path.merged_jump_times(node.parents());
    let mut times = Vec::with_capacity(path.node(w).jump_count() + 4);
    times.push(path.tmin());
    for (a, b, s) in path.node(w).segments() {
        if a > path.tmin() {
            times.push(a);
        }
        let mut starts = vec![a];
        for &pj in &parent_jumps {
            if pj > a && pj < b {
                starts.push(pj);
            }
        }
        let values: Vec<f64> = starts
            .iter()
            .map(|&t0| {
                let cfg = model.parent_config_with(w, |p| path.node(p).evaluate(t0).unwrap());
                (node.r_rate(s) - node.leaving_rate(cfg, s)).max(0.0)
            })
            .collect();
        let rate = RateFunction::new(starts, values, b)?;
        let mut placed = false;
        for _ in 0..64 {
            let points = sample_poisson_process(&rate, a, b, rng)?;
            if separated(&points, a, b, tie) {
                times.extend(points);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(
                "could not separate auxiliary events from existing jumps",
            ));
        }
    }
    Ok(times)
}

fn separated(points: &[f64], a: f64, b: f64, tie: f64) -> bool {
    let mut prev = a;
    for &p in points {
        if p - prev < tie {
            return false;
        }
        prev = p;
    }
    b - prev >= tie
}

/// Log density of child `u`'s path restricted to `[lo, hi)`, computed with
/// node `w`'s trajectory replaced by the constant state `s_w`: one rate
/// factor per jump of `u` inside the window plus the survival integral,
/// both under the overridden parent configurations.
fn child_segment_log_density(
    model: &CtbnModel,
    path: &CtbnPath,
    u: usize,
    lo: f64,
    hi: f64,
    w: usize,
    s_w: usize,
) -> f64 {
    let node = model.node(u);
    let cfg_at = |t: f64| {
        model.parent_config_with(u, |p| {
            if p == w {
                s_w
            } else {
                path.node(p).evaluate(t).unwrap()
            }
        })
    };

    let mut ld = 0.0;
    let traj = path.node(u);
    // jump factors for u's jumps in [lo, hi)
    let jt = traj.jump_times();
    let start = jt.partition_point(|&t| t < lo);
    for i in start..jt.len() {
        let t = jt[i];
        if t >= hi {
            break;
        }
        let rate = node.q_rate(cfg_at(t), traj.states()[i], traj.states()[i + 1]);
        if rate <= 0.0 {
            return LOG_ZERO;
        }
        ld += rate.ln();
    }
    // survival: piecewise over u's own jumps and the jumps of u's other
    // parents inside the window
    let mut watch: Vec<usize> = vec![u];
    watch.extend(node.parents().iter().copied().filter(|&p| p != w));
    let mut cuts: Vec<f64> = path
        .merged_jump_times(&watch)
        .into_iter()
        .filter(|&t| t > lo && t < hi)
        .collect();
    cuts.push(hi);
    let mut a = lo;
    for &b in &cuts {
        if b > a {
            let s_u = traj.evaluate(a).unwrap();
            ld -= node.leaving_rate(cfg_at(a), s_u) * (b - a);
        }
        a = b;
    }
    ld
}

/// Skeleton HMM of the full conditional of node `w` given every other node,
/// for potential jump times `times` (with `times[0] = tmin`). Transitions
/// are thinning matrices of the conditional rates under the parent
/// configuration active at each event time; potentials carry the
/// instrumental arrival and survival factors, the children's conditional
/// densities with `w` pinned to each candidate state, and optional per-node
/// point-observation tables.
pub fn node_full_conditional_hmm(
    model: &CtbnModel,
    path: &CtbnPath,
    w: usize,
    times: &[f64],
    evidence: Option<&Evidence>,
) -> Result<SkeletonHmm> {
    if times.is_empty() || times[0] != path.tmin() {
        return Err(Error::invalid("times must start at tmin"));
    }
    let node = model.node(w);
    let n = node.n_states();
    let n_events = times.len();
    let initial = model.initial_conditional(w, &path.states_at(path.tmin())?)?;

    let mut trans = Vec::with_capacity(n_events - 1);
    let mut log_pot = vec![vec![0.0; n]; n_events];
    let obs = evidence.map(|e| e.obs_times()).unwrap_or(&[]);
    let mut j = 0usize;

    for i in 1..n_events {
        let lo = times[i - 1];
        let hi = times[i];
        if !(hi > lo) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        let cfg = model.parent_config_with(w, |p| path.node(p).evaluate(hi).unwrap());
        let mut p = Array2::zeros((n, n));
        for s in 0..n {
            let r = node.r_rate(s);
            let mut off = 0.0;
            for s2 in 0..n {
                if s2 != s {
                    let v = if r > 0.0 { node.q_rate(cfg, s, s2) / r } else { 0.0 };
                    p[[s, s2]] = v;
                    off += v;
                }
            }
            p[[s, s]] = (1.0 - off).max(0.0);
        }
        trans.push(p);

        let g = &mut log_pot[i - 1];
        for s in 0..n {
            let r = node.r_rate(s);
            g[s] += if r > 0.0 { r.ln() } else { LOG_ZERO };
            g[s] -= r * (hi - lo);
            for &u in model.children(w) {
                g[s] += child_segment_log_density(model, path, u, lo, hi, w, s);
            }
        }
        while j < obs.len() && obs[j] < hi {
            let table = evidence.unwrap().log_lik(j);
            for s in 0..n {
                g[s] += table[s];
            }
            j += 1;
        }
    }

    let lo = times[n_events - 1];
    let hi = path.tmax();
    let g = &mut log_pot[n_events - 1];
    for s in 0..n {
        g[s] -= node.r_rate(s) * (hi - lo);
        for &u in model.children(w) {
            g[s] += child_segment_log_density(model, path, u, lo, hi, w, s);
        }
    }
    while j < obs.len() {
        let table = evidence.unwrap().log_lik(j);
        for s in 0..n {
            g[s] += table[s];
        }
        j += 1;
    }

    SkeletonHmm::new(initial, trans, log_pot)
}

/// One scan of the random-scan Gibbs sampler: choose an unobserved node with
/// probability proportional to `scan_weights`, then replace its trajectory
/// with an exact draw from the full conditional (virtual-jump refresh
/// followed by an FFBS skeleton redraw). Returns the updated node.
pub fn gibbs_step<R: Rng + ?Sized>(
    model: &CtbnModel,
    path: &mut CtbnPath,
    unobserved: &[usize],
    scan_weights: &[f64],
    node_evidence: &BTreeMap<usize, Evidence>,
    rng: &mut R,
) -> Result<usize> {
    if unobserved.is_empty() {
        return Err(Error::invalid("no unobserved nodes to update"));
    }
    if scan_weights.len() != unobserved.len() || scan_weights.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid(
            "scan weights must be strictly positive, one per unobserved node",
        ));
    }
    let pick = sample_categorical(scan_weights, rng)
        .ok_or_else(|| Error::invalid("scan weights have zero mass"))?;
    let w = unobserved[pick];
    update_node(model, path, w, node_evidence.get(&w), rng)?;
    Ok(w)
}

/// Applies the trajectory kernel to one fixed node.
pub fn update_node<R: Rng + ?Sized>(
    model: &CtbnModel,
    path: &mut CtbnPath,
    w: usize,
    evidence: Option<&Evidence>,
    rng: &mut R,
) -> Result<()> {
    let times = resample_virtual_node(model, path, w, rng)?;
    let hmm = node_full_conditional_hmm(model, path, w, &times, evidence)?;
    let filtered = forward_filter(&hmm)?;
    let skeleton = backward_sample(&hmm, &filtered, rng)?;
    let ev = EventSequence::new(path.tmin(), path.tmax(), times, skeleton)?;
    path.set_node(w, ev.compact())
}

/// Exact forward simulation of node `w` given the parent trajectories in
/// `path`: within each interval where the parent configuration is constant
/// the node is a homogeneous MJP, simulated by competing exponential clocks.
/// `initial` fixes the starting state; `None` draws it from the conditional
/// initial law.
pub fn sample_node_given_parents<R: Rng + ?Sized>(
    model: &CtbnModel,
    path: &CtbnPath,
    w: usize,
    initial: Option<usize>,
    rng: &mut R,
) -> Result<Trajectory> {
    let node = model.node(w);
    let s0 = match initial {
        Some(s) => s,
        None => {
            let law = model.initial_conditional(w, &path.states_at(path.tmin())?)?;
            sample_categorical(&law, rng)
                .ok_or_else(|| Error::invalid("conditional initial law has zero mass"))?
        }
    };
    let mut boundaries = path.merged_jump_times(node.parents());
    boundaries.push(path.tmax());

    let mut jump_times = Vec::new();
    let mut states = vec![s0];
    let mut state = s0;
    let mut t = path.tmin();
    for &b in &boundaries {
        let cfg = model.parent_config_with(w, |p| path.node(p).evaluate(t).unwrap());
        loop {
            let rate = node.leaving_rate(cfg, state);
            if rate <= 0.0 {
                break;
            }
            let candidate = t + sample_exp1(rng) / rate;
            if candidate >= b {
                break;
            }
            t = candidate;
            let weights: Vec<f64> = (0..node.n_states())
                .map(|s2| if s2 == state { 0.0 } else { node.q_rate(cfg, state, s2) })
                .collect();
            let next = sample_categorical(&weights, rng)
                .ok_or_else(|| Error::invalid("leaving rate positive but no exit rates"))?;
            jump_times.push(t);
            states.push(next);
            state = next;
        }
        t = b;
    }
    Trajectory::new(path.tmin(), path.tmax(), jump_times, states)
}

/// Exact joint prior draw of the whole network by competing exponential
/// clocks across nodes.
pub fn sample_prior<R: Rng + ?Sized>(model: &CtbnModel, rng: &mut R) -> Result<CtbnPath> {
    let mut current = sample_joint_initial(model, None, rng)?;
    let n_nodes = model.n_nodes();
    let mut jump_times: Vec<Vec<f64>> = vec![Vec::new(); n_nodes];
    let mut states: Vec<Vec<usize>> = current.iter().map(|&s| vec![s]).collect();
    let mut t = model.tmin();
    loop {
        let rates: Vec<f64> = (0..n_nodes)
            .map(|w| {
                let cfg = model.parent_config(w, &current);
                model.node(w).leaving_rate(cfg, current[w])
            })
            .collect();
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        t += sample_exp1(rng) / total;
        if t >= model.tmax() {
            break;
        }
        let w = sample_categorical(&rates, rng).expect("total rate positive");
        let node = model.node(w);
        let cfg = model.parent_config(w, &current);
        let weights: Vec<f64> = (0..node.n_states())
            .map(|s2| if s2 == current[w] { 0.0 } else { node.q_rate(cfg, current[w], s2) })
            .collect();
        let next = sample_categorical(&weights, rng)
            .ok_or_else(|| Error::invalid("leaving rate positive but no exit rates"))?;
        jump_times[w].push(t);
        states[w].push(next);
        current[w] = next;
    }
    let trajectories = jump_times
        .into_iter()
        .zip(states)
        .map(|(jt, st)| Trajectory::new(model.tmin(), model.tmax(), jt, st))
        .collect::<Result<Vec<_>>>()?;
    CtbnPath::new(trajectories)
}

/// Draws a joint initial configuration, holding the coordinates in `fixed`
/// (node index, state) at their given values. Tabular laws are sampled by
/// enumeration of the table restricted to the fixed coordinates.
pub fn sample_joint_initial<R: Rng + ?Sized>(
    model: &CtbnModel,
    fixed: Option<&BTreeMap<usize, usize>>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match model.initial_law() {
        InitialLaw::Factored(factors) => {
            let mut states = Vec::with_capacity(model.n_nodes());
            for (w, factor) in factors.iter().enumerate() {
                if let Some(&s) = fixed.and_then(|f| f.get(&w)) {
                    states.push(s);
                } else {
                    states.push(
                        sample_categorical(factor, rng)
                            .ok_or_else(|| Error::invalid("initial factor has zero mass"))?,
                    );
                }
            }
            Ok(states)
        }
        InitialLaw::Tabular(table) => {
            let weights: Vec<f64> = (0..table.len())
                .map(|idx| {
                    let states = model.unflatten(idx);
                    let ok = fixed
                        .map(|f| f.iter().all(|(&w, &s)| states[w] == s))
                        .unwrap_or(true);
                    if ok {
                        table[idx]
                    } else {
                        0.0
                    }
                })
                .collect();
            let idx = sample_categorical(&weights, rng).ok_or_else(|| {
                Error::invalid("initial law has zero mass given the observed initial states")
            })?;
            Ok(model.unflatten(idx))
        }
    }
}

#[derive(Debug, Clone)]
pub struct CtbnChainConfig {
    pub scans: usize,
    pub burnin: usize,
    pub thin: usize,
    pub probes: Vec<f64>,
    /// One positive weight per unobserved node; `None` is uniform.
    pub scan_weights: Option<Vec<f64>>,
    pub snapshot_every: Option<usize>,
}

impl CtbnChainConfig {
    pub fn new(scans: usize, burnin: usize, thin: usize, probes: Vec<f64>) -> Result<Self> {
        if scans > 0 && burnin >= scans {
            return Err(Error::invalid("burn-in must be smaller than scan count"));
        }
        if thin == 0 {
            return Err(Error::invalid("thinning stride must be positive"));
        }
        Ok(CtbnChainConfig {
            scans,
            burnin,
            thin,
            probes,
            scan_weights: None,
            snapshot_every: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CtbnSweepRecord {
    pub scan: usize,
    /// Sum of jump counts over unobserved nodes.
    pub total_jump_count: usize,
    pub node_jump_counts: Vec<usize>,
    pub log_density: f64,
    /// `probe_states[k][p]`: state of the k-th unobserved node at probe p.
    pub probe_states: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct CtbnTrace {
    pub unobserved: Vec<usize>,
    pub probes: Vec<f64>,
    pub records: Vec<CtbnSweepRecord>,
    pub snapshots: Vec<(usize, CtbnPath)>,
    pub final_path: CtbnPath,
}

impl CtbnTrace {
    pub fn total_jump_counts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_jump_count as f64).collect()
    }

    pub fn log_densities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log_density).collect()
    }

    /// Empirical state distribution of unobserved node `k` at probe `p`.
    pub fn probe_marginal(&self, k: usize, p: usize, n_states: usize) -> Vec<f64> {
        let mut dist = vec![0.0; n_states];
        for r in &self.records {
            dist[r.probe_states[k][p]] += 1.0;
        }
        crate::math::normalize(&mut dist);
        dist
    }
}

#[derive(Debug, Clone)]
pub enum CtbnInit {
    /// Unobserved nodes start as constant paths at a joint initial draw
    /// consistent with the observed nodes (always has positive prior
    /// density).
    Constant,
    Fixed(CtbnPath),
}

/// Runs one random-scan Gibbs chain. `observed` maps node indices to their
/// fully observed trajectories; `node_evidence` optionally attaches noisy
/// point observations to unobserved nodes.
pub fn run_ctbn_chain<R: Rng + ?Sized>(
    model: &CtbnModel,
    observed: &BTreeMap<usize, Trajectory>,
    node_evidence: &BTreeMap<usize, Evidence>,
    init: &CtbnInit,
    config: &CtbnChainConfig,
    rng: &mut R,
) -> Result<CtbnTrace> {
    let unobserved: Vec<usize> =
        (0..model.n_nodes()).filter(|w| !observed.contains_key(w)).collect();
    if unobserved.is_empty() {
        return Err(Error::invalid("every node is observed; nothing to sample"));
    }
    for (&w, evid) in node_evidence {
        if observed.contains_key(&w) {
            return Err(Error::invalid(format!(
                "node {} is fully observed and cannot also carry point evidence",
                model.node(w).name()
            )));
        }
        for j in 0..evid.len() {
            if evid.log_lik(j).len() != model.node(w).n_states() {
                return Err(Error::invalid("evidence table length mismatch"));
            }
        }
    }
    let weights = match &config.scan_weights {
        Some(ws) => {
            if ws.len() != unobserved.len() {
                return Err(Error::invalid("one scan weight per unobserved node"));
            }
            ws.clone()
        }
        None => vec![1.0; unobserved.len()],
    };

    let mut path = match init {
        CtbnInit::Fixed(p) => {
            let mut p = p.clone();
            for (&w, traj) in observed {
                p.set_node(w, traj.clone())?;
            }
            p
        }
        CtbnInit::Constant => {
            let fixed: BTreeMap<usize, usize> = observed
                .iter()
                .map(|(&w, traj)| Ok((w, traj.evaluate(model.tmin())?)))
                .collect::<Result<_>>()?;
            let joint = sample_joint_initial(model, Some(&fixed), rng)?;
            let trajectories = (0..model.n_nodes())
                .map(|w| match observed.get(&w) {
                    Some(traj) => Ok(traj.clone()),
                    None => Trajectory::constant(model.tmin(), model.tmax(), joint[w]),
                })
                .collect::<Result<Vec<_>>>()?;
            CtbnPath::new(trajectories)?
        }
    };

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    for scan in 0..config.scans {
        gibbs_step(model, &mut path, &unobserved, &weights, node_evidence, rng)?;
        if scan >= config.burnin && (scan - config.burnin) % config.thin == 0 {
            let mut log_density = path_log_density(model, &path)?;
            for (&w, evid) in node_evidence {
                log_density += evid.log_likelihood(path.node(w))?;
            }
            let node_jump_counts: Vec<usize> =
                unobserved.iter().map(|&w| path.node(w).jump_count()).collect();
            let probe_states = unobserved
                .iter()
                .map(|&w| {
                    config
                        .probes
                        .iter()
                        .map(|&t| path.node(w).evaluate(t))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(CtbnSweepRecord {
                scan,
                total_jump_count: node_jump_counts.iter().sum(),
                node_jump_counts,
                log_density,
                probe_states,
            });
            if let Some(k) = config.snapshot_every {
                if k > 0 && (scan - config.burnin) % k == 0 {
                    snapshots.push((scan, path.clone()));
                }
            }
        }
    }
    Ok(CtbnTrace {
        unobserved,
        probes: config.probes.clone(),
        records,
        snapshots,
        final_path: path,
    })
}

/// Runs `chains` independent Gibbs chains on up to `threads` workers,
/// seeded per chain index exactly like the single-process runner.
pub fn run_ctbn_chains(
    model: &CtbnModel,
    observed: &BTreeMap<usize, Trajectory>,
    node_evidence: &BTreeMap<usize, Evidence>,
    init: &CtbnInit,
    config: &CtbnChainConfig,
    seed: u64,
    chains: usize,
    threads: usize,
) -> Result<Vec<CtbnTrace>> {
    let slots: Mutex<Vec<Option<Result<CtbnTrace>>>> =
        Mutex::new((0..chains).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, chains.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= chains {
                    break;
                }
                let mut rng = chain_rng(seed, i as u64);
                let result = run_ctbn_chain(model, observed, node_evidence, init, config, &mut rng);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every chain index was visited"))
        .collect()
}

//! Network sample paths, their per-node sufficient statistics (jump counts
//! and occupation times per parent configuration), and the factored path
//! density.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::LOG_ZERO;
use crate::mjp::{ln_or_zero, Trajectory};

use super::model::CtbnModel;

/// One trajectory per node, all sharing the same time window.
#[derive(Debug, Clone, PartialEq)]
pub struct CtbnPath {
    nodes: Vec<Trajectory>,
}

impl CtbnPath {
    pub fn new(nodes: Vec<Trajectory>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("network path needs at least one node"));
        }
        let (tmin, tmax) = (nodes[0].tmin(), nodes[0].tmax());
        for t in &nodes {
            if t.tmin() != tmin || t.tmax() != tmax {
                return Err(Error::invalid("node trajectories must share the time window"));
            }
        }
        Ok(CtbnPath { nodes })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, w: usize) -> &Trajectory {
        &self.nodes[w]
    }

    pub fn nodes(&self) -> &[Trajectory] {
        &self.nodes
    }

    pub fn set_node(&mut self, w: usize, traj: Trajectory) -> Result<()> {
        if traj.tmin() != self.tmin() || traj.tmax() != self.tmax() {
            return Err(Error::invalid("replacement trajectory window mismatch"));
        }
        self.nodes[w] = traj;
        Ok(())
    }

    pub fn tmin(&self) -> f64 {
        self.nodes[0].tmin()
    }

    pub fn tmax(&self) -> f64 {
        self.nodes[0].tmax()
    }

    pub fn states_at(&self, t: f64) -> Result<Vec<usize>> {
        self.nodes.iter().map(|traj| traj.evaluate(t)).collect()
    }

    /// Sum of per-node jump counts (each counts its initial index).
    pub fn total_jump_count(&self) -> usize {
        self.nodes.iter().map(|t| t.jump_count()).sum()
    }

    /// Jump times of the listed nodes, merged, sorted, deduplicated.
    pub fn merged_jump_times(&self, nodes: &[usize]) -> Vec<f64> {
        let mut times: Vec<f64> = nodes
            .iter()
            .flat_map(|&w| self.nodes[w].jump_times().iter().copied())
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        times
    }

    /// The joint path as a single trajectory on the product space of
    /// `model`. Fails if two nodes jump at exactly the same time (the flat
    /// representation cannot order them).
    pub fn flatten_to_trajectory(&self, model: &CtbnModel) -> Result<Trajectory> {
        let all: Vec<usize> = (0..self.n_nodes()).collect();
        let times = self.merged_jump_times(&all);
        let mut total_jumps = 0usize;
        for w in &all {
            total_jumps += self.nodes[*w].jump_times().len();
        }
        if times.len() != total_jumps {
            return Err(Error::invalid(
                "simultaneous jumps of two nodes cannot be flattened",
            ));
        }
        let mut states = Vec::with_capacity(times.len() + 1);
        states.push(model.flat_index(&self.states_at(self.tmin())?));
        for &t in &times {
            states.push(model.flat_index(&self.states_at(t)?));
        }
        Trajectory::new(self.tmin(), self.tmax(), times, states)
    }
}

/// Jump counts and occupation times of one node, split by parent
/// configuration.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    /// `counts[cfg][[s, s2]]`: jumps from `s` to `s2` while the parents sat
    /// in configuration `cfg`.
    pub counts: Vec<Array2<u64>>,
    /// `durations[cfg][s]`: time spent in `s` under configuration `cfg`.
    pub durations: Vec<Vec<f64>>,
}

impl SufficientStats {
    pub fn total_duration(&self) -> f64 {
        self.durations.iter().flat_map(|d| d.iter()).sum()
    }

    pub fn total_jumps(&self) -> u64 {
        self.counts.iter().flat_map(|c| c.iter()).sum()
    }
}

/// Computes the sufficient statistics of node `w` by sweeping the merged
/// event timeline of the node and its parents. Parent configurations are
/// read right-continuously, so a jump of `w` that coincides with a parent
/// jump is attributed to the configuration after the parent's move.
pub fn sufficient_stats(model: &CtbnModel, path: &CtbnPath, w: usize) -> Result<SufficientStats> {
    let node = model.node(w);
    let n = node.n_states();
    let n_configs = node.n_configs();
    let mut counts = vec![Array2::zeros((n, n)); n_configs];
    let mut durations = vec![vec![0.0; n]; n_configs];

    let mut watch = vec![w];
    watch.extend_from_slice(node.parents());
    let mut boundaries = path.merged_jump_times(&watch);
    boundaries.push(path.tmax());

    let mut lo = path.tmin();
    for &hi in &boundaries {
        if hi > lo {
            let cfg = model.parent_config_with(w, |p| path.node(p).evaluate(lo).unwrap());
            let s = path.node(w).evaluate(lo)?;
            durations[cfg][s] += hi - lo;
        }
        lo = hi;
    }

    let traj = path.node(w);
    for (i, &t) in traj.jump_times().iter().enumerate() {
        let cfg = model.parent_config_with(w, |p| path.node(p).evaluate(t).unwrap());
        counts[cfg][[traj.states()[i], traj.states()[i + 1]]] += 1;
    }
    Ok(SufficientStats { counts, durations })
}

/// Log density of node `w`'s path with the parent paths held fixed:
/// `Σ ι log Q - Σ Q τ` over configurations and states. Log-zero when the
/// path jumps where the conditional rate vanishes.
pub fn node_log_density(model: &CtbnModel, path: &CtbnPath, w: usize) -> Result<f64> {
    let node = model.node(w);
    let stats = sufficient_stats(model, path, w)?;
    let n = node.n_states();
    let mut ld = 0.0;
    for cfg in 0..node.n_configs() {
        for s in 0..n {
            for s2 in 0..n {
                if s == s2 {
                    continue;
                }
                let count = stats.counts[cfg][[s, s2]];
                if count > 0 {
                    let rate = node.q_rate(cfg, s, s2);
                    if rate <= 0.0 {
                        return Ok(LOG_ZERO);
                    }
                    ld += count as f64 * rate.ln();
                }
            }
            ld -= node.leaving_rate(cfg, s) * stats.durations[cfg][s];
        }
    }
    Ok(ld)
}

/// Joint log density of a network path: initial mass plus the sum of the
/// per-node conditional densities.
pub fn path_log_density(model: &CtbnModel, path: &CtbnPath) -> Result<f64> {
    let initial = path.states_at(path.tmin())?;
    let mut ld = ln_or_zero(model.initial_mass(&initial));
    for w in 0..model.n_nodes() {
        ld += node_log_density(model, path, w)?;
    }
    Ok(ld)
}

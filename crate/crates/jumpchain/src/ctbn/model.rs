//! Continuous-time Bayesian network models: a directed graph (cycles
//! allowed) over nodes with finite state spaces, one conditional intensity
//! matrix per parent configuration, per-node instrumental rates, and a
//! joint initial law (factored or tabular).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::normalize;
use crate::mjp::{is_irreducible, Assumption, AssumptionFailure, IntensityModel, StateSpace};

/// One network node: its state space, parents (by node index), conditional
/// intensity matrices indexed by the mixed-radix parent configuration (the
/// last listed parent varies fastest), and a time-homogeneous instrumental
/// rate per state.
#[derive(Debug, Clone)]
pub struct CtbnNode {
    pub(crate) name: String,
    pub(crate) states: StateSpace,
    pub(crate) parents: Vec<usize>,
    pub(crate) cims: Vec<Array2<f64>>,
    pub(crate) r: Vec<f64>,
    pub(crate) leaving: Vec<Vec<f64>>,
}

impl CtbnNode {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.size()
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn n_configs(&self) -> usize {
        self.cims.len()
    }

    /// Off-diagonal conditional rate under parent configuration `cfg`.
    pub fn q_rate(&self, cfg: usize, s: usize, s2: usize) -> f64 {
        self.cims[cfg][[s, s2]]
    }

    /// Total leaving rate under parent configuration `cfg`.
    pub fn leaving_rate(&self, cfg: usize, s: usize) -> f64 {
        self.leaving[cfg][s]
    }

    /// Instrumental rate of state `s` (time-homogeneous).
    pub fn r_rate(&self, s: usize) -> f64 {
        self.r[s]
    }

    /// Entrywise minimum of the conditional rates over parent
    /// configurations.
    pub fn q_min(&self) -> Array2<f64> {
        let n = self.n_states();
        let mut m = self.cims[0].clone();
        for cim in &self.cims[1..] {
            for s in 0..n {
                for s2 in 0..n {
                    if cim[[s, s2]] < m[[s, s2]] {
                        m[[s, s2]] = cim[[s, s2]];
                    }
                }
            }
        }
        m
    }
}

/// Joint initial distribution over the product state space.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    /// Independent per-node distributions.
    Factored(Vec<Vec<f64>>),
    /// Full table over the product space, node 0 most significant.
    Tabular(Vec<f64>),
}

/// Specification of one node for [`CtbnModel::new`].
#[derive(Debug, Clone)]
pub struct CtbnNodeSpec {
    pub name: String,
    pub states: StateSpace,
    pub parents: Vec<usize>,
    /// One matrix per parent configuration; diagonals are ignored.
    pub cims: Vec<Array2<f64>>,
    /// Per-state instrumental rate; `None` applies the default rule
    /// `2 * max(max_cfg Q(cfg;s), q_floor)`.
    pub r: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CtbnModel {
    nodes: Vec<CtbnNode>,
    children: Vec<Vec<usize>>,
    nu: InitialLaw,
    tmin: f64,
    tmax: f64,
}

impl CtbnModel {
    pub fn new(specs: Vec<CtbnNodeSpec>, nu: InitialLaw, tmin: f64, tmax: f64) -> Result<Self> {
        if !(tmax > tmin) || !tmin.is_finite() || !tmax.is_finite() {
            return Err(Error::invalid(format!("bad time window [{tmin}, {tmax}]")));
        }
        if specs.is_empty() {
            return Err(Error::invalid("network needs at least one node"));
        }
        let n_nodes = specs.len();
        for (w, spec) in specs.iter().enumerate() {
            if specs[..w].iter().any(|other| other.name == spec.name) {
                return Err(Error::invalid(format!("duplicate node name {:?}", spec.name)));
            }
            for &p in &spec.parents {
                if p >= n_nodes {
                    return Err(Error::invalid(format!(
                        "node {:?} lists parent index {p} out of range",
                        spec.name
                    )));
                }
                if p == w {
                    return Err(Error::invalid(format!(
                        "node {:?} cannot be its own parent",
                        spec.name
                    )));
                }
            }
            for (i, &p) in spec.parents.iter().enumerate() {
                if spec.parents[..i].contains(&p) {
                    return Err(Error::invalid(format!(
                        "node {:?} lists a parent twice",
                        spec.name
                    )));
                }
            }
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for spec in &specs {
            let n = spec.states.size();
            let n_configs: usize = spec
                .parents
                .iter()
                .map(|&p| specs[p].states.size())
                .product();
            if spec.cims.len() != n_configs {
                return Err(Error::invalid(format!(
                    "node {:?}: expected {n_configs} conditional matrices, got {}",
                    spec.name,
                    spec.cims.len()
                )));
            }
            let mut cims = Vec::with_capacity(n_configs);
            let mut leaving = Vec::with_capacity(n_configs);
            for cim in &spec.cims {
                if cim.nrows() != n || cim.ncols() != n {
                    return Err(Error::invalid(format!(
                        "node {:?}: conditional matrix dimension mismatch",
                        spec.name
                    )));
                }
                let mut clean = Array2::zeros((n, n));
                let mut lv = vec![0.0; n];
                for s in 0..n {
                    for s2 in 0..n {
                        if s == s2 {
                            continue;
                        }
                        let rate = cim[[s, s2]];
                        if !rate.is_finite() || rate < 0.0 {
                            return Err(Error::invalid(format!(
                                "node {:?}: rate ({s},{s2}) = {rate} must be finite and nonnegative",
                                spec.name
                            )));
                        }
                        clean[[s, s2]] = rate;
                        lv[s] += rate;
                    }
                }
                cims.push(clean);
                leaving.push(lv);
            }
            let r = match &spec.r {
                Some(r) => {
                    if r.len() != n {
                        return Err(Error::invalid(format!(
                            "node {:?}: R length mismatch",
                            spec.name
                        )));
                    }
                    if r.iter().any(|&v| !v.is_finite() || v < 0.0) {
                        return Err(Error::invalid(format!(
                            "node {:?}: R must be finite and nonnegative",
                            spec.name
                        )));
                    }
                    r.clone()
                }
                None => {
                    let q_max = leaving
                        .iter()
                        .flat_map(|b| b.iter().copied())
                        .fold(0.0, f64::max);
                    let floor = q_max * 1e-6;
                    (0..n)
                        .map(|s| {
                            let worst = leaving.iter().map(|lv| lv[s]).fold(0.0, f64::max);
                            2.0 * worst.max(floor)
                        })
                        .collect()
                }
            };
            nodes.push(CtbnNode {
                name: spec.name.clone(),
                states: spec.states.clone(),
                parents: spec.parents.clone(),
                cims,
                r,
                leaving,
            });
        }
        let mut children = vec![Vec::new(); n_nodes];
        for (w, node) in nodes.iter().enumerate() {
            for &p in &node.parents {
                children[p].push(w);
            }
        }
        match &nu {
            InitialLaw::Factored(factors) => {
                if factors.len() != n_nodes {
                    return Err(Error::invalid("one initial factor per node"));
                }
                for (w, f) in factors.iter().enumerate() {
                    if f.len() != nodes[w].n_states() {
                        return Err(Error::invalid(format!(
                            "initial factor for node {:?} has wrong length",
                            nodes[w].name
                        )));
                    }
                    check_simplex(f, &format!("initial factor of node {:?}", nodes[w].name))?;
                }
            }
            InitialLaw::Tabular(table) => {
                let size: usize = nodes.iter().map(|n| n.n_states()).product();
                if table.len() != size {
                    return Err(Error::invalid(format!(
                        "tabular initial law has {} entries for a product space of {size}",
                        table.len()
                    )));
                }
                check_simplex(table, "tabular initial law")?;
            }
        }
        Ok(CtbnModel {
            nodes,
            children,
            nu,
            tmin,
            tmax,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, w: usize) -> &CtbnNode {
        &self.nodes[w]
    }

    pub fn nodes(&self) -> &[CtbnNode] {
        &self.nodes
    }

    pub fn children(&self, w: usize) -> &[usize] {
        &self.children[w]
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.nu
    }

    pub fn tmin(&self) -> f64 {
        self.tmin
    }

    pub fn tmax(&self) -> f64 {
        self.tmax
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Mixed-radix index of node `w`'s parent configuration given the full
    /// state vector (last listed parent varies fastest).
    pub fn parent_config(&self, w: usize, states: &[usize]) -> usize {
        self.nodes[w]
            .parents
            .iter()
            .fold(0, |acc, &p| acc * self.nodes[p].n_states() + states[p])
    }

    /// Same, but reading parent states through an accessor.
    pub fn parent_config_with(&self, w: usize, state_of: impl Fn(usize) -> usize) -> usize {
        self.nodes[w]
            .parents
            .iter()
            .fold(0, |acc, &p| acc * self.nodes[p].n_states() + state_of(p))
    }

    /// Flat index of a joint configuration (node 0 most significant).
    pub fn flat_index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.nodes)
            .fold(0, |acc, (&s, node)| acc * node.n_states() + s)
    }

    /// Inverse of [`flat_index`].
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut states = vec![0usize; self.n_nodes()];
        for w in (0..self.n_nodes()).rev() {
            let n = self.nodes[w].n_states();
            states[w] = idx % n;
            idx /= n;
        }
        states
    }

    pub fn product_size(&self) -> usize {
        self.nodes.iter().map(|n| n.n_states()).product()
    }

    /// Joint initial probability of a configuration.
    pub fn initial_mass(&self, states: &[usize]) -> f64 {
        match &self.nu {
            InitialLaw::Factored(factors) => factors
                .iter()
                .zip(states)
                .map(|(f, &s)| f[s])
                .product(),
            InitialLaw::Tabular(table) => table[self.flat_index(states)],
        }
    }

    /// Conditional initial law of node `w` given the other coordinates of
    /// `states` (the `w` entry is ignored).
    pub fn initial_conditional(&self, w: usize, states: &[usize]) -> Result<Vec<f64>> {
        match &self.nu {
            InitialLaw::Factored(factors) => Ok(factors[w].clone()),
            InitialLaw::Tabular(_) => {
                let mut probe = states.to_vec();
                let mut cond: Vec<f64> = (0..self.nodes[w].n_states())
                    .map(|s| {
                        probe[w] = s;
                        self.initial_mass(&probe)
                    })
                    .collect();
                if normalize(&mut cond) <= 0.0 {
                    return Err(Error::invalid(format!(
                        "initial law assigns zero mass to every state of node {:?} \
                         given the other initial states",
                        self.nodes[w].name
                    )));
                }
                Ok(cond)
            }
        }
    }

    /// Tabular form of the initial law over the product space.
    pub fn initial_tabular(&self) -> Vec<f64> {
        match &self.nu {
            InitialLaw::Tabular(table) => table.clone(),
            InitialLaw::Factored(_) => {
                let size = self.product_size();
                (0..size)
                    .map(|idx| self.initial_mass(&self.unflatten(idx)))
                    .collect()
            }
        }
    }

    /// Joint generator on the product space: only single-node moves carry
    /// rate, `Q(s̄, s̄') = Q_w(cfg; s_w, s'_w)` when the configurations agree
    /// off `w`. Errors when the product space exceeds `cap`.
    pub fn flatten(&self, cap: usize) -> Result<IntensityModel> {
        let size = self.product_size();
        if size > cap {
            return Err(Error::CapExceeded { size, cap });
        }
        let labels: Vec<String> = (0..size)
            .map(|idx| {
                let states = self.unflatten(idx);
                states
                    .iter()
                    .zip(&self.nodes)
                    .map(|(&s, node)| node.states.label(s).to_string())
                    .collect::<Vec<_>>()
                    .join(":")
            })
            .collect();
        let mut q = Array2::zeros((size, size));
        for idx in 0..size {
            let states = self.unflatten(idx);
            for (w, node) in self.nodes.iter().enumerate() {
                let cfg = self.parent_config(w, &states);
                let mut target = states.clone();
                for s2 in 0..node.n_states() {
                    if s2 == states[w] {
                        continue;
                    }
                    target[w] = s2;
                    q[[idx, self.flat_index(&target)]] = node.q_rate(cfg, states[w], s2);
                }
                target[w] = states[w];
            }
        }
        IntensityModel::homogeneous(
            StateSpace::new(labels)?,
            self.initial_tabular(),
            self.tmin,
            self.tmax,
            q,
            None,
        )
    }

    /// Per-node checks of the Gibbs sampler's ergodicity preconditions:
    /// an irreducible entrywise minimum of the conditional rates, the
    /// margin `Q_w(c;s)/R_w(s) <= 1 - eta`, bounded instrumental rates, and
    /// configuration-independent supports.
    pub fn validate(&self, eta: f64) -> CtbnValidationReport {
        let mut node_failures = Vec::new();
        let mut r_max = 0.0f64;
        let mut achieved_eta = 1.0f64;
        for node in &self.nodes {
            let mut failures = Vec::new();
            let n = node.n_states();
            if n < 2 {
                failures.push(AssumptionFailure {
                    assumption: Assumption::WellFormed,
                    time: None,
                    state: None,
                    detail: "samplers require at least 2 states per node".to_string(),
                });
            }
            if !(eta > 0.0 && eta < 1.0) {
                failures.push(AssumptionFailure {
                    assumption: Assumption::WellFormed,
                    time: None,
                    state: None,
                    detail: format!("eta = {eta} must lie in (0, 1)"),
                });
            }
            if n >= 2 && !is_irreducible(&node.q_min()) {
                failures.push(AssumptionFailure {
                    assumption: Assumption::IrreducibleMinRates,
                    time: None,
                    state: None,
                    detail: "entrywise minimum of the conditional rates over parent \
                             configurations is reducible"
                        .to_string(),
                });
            }
            for s in 0..n {
                let r = node.r[s];
                if !r.is_finite() {
                    failures.push(AssumptionFailure {
                        assumption: Assumption::BoundedInstrumentalRate,
                        time: None,
                        state: Some(s),
                        detail: format!("R = {r} is not finite"),
                    });
                    continue;
                }
                r_max = r_max.max(r);
                for cfg in 0..node.n_configs() {
                    let q = node.leaving_rate(cfg, s);
                    if r <= 0.0 {
                        failures.push(AssumptionFailure {
                            assumption: Assumption::IntensityDominationMargin,
                            time: None,
                            state: Some(s),
                            detail: format!("R must be strictly positive (config {cfg})"),
                        });
                        achieved_eta = 0.0;
                        break;
                    }
                    let ratio = q / r;
                    achieved_eta = achieved_eta.min(1.0 - ratio);
                    if eta > 0.0 && eta < 1.0 && ratio > 1.0 - eta + 1e-15 {
                        failures.push(AssumptionFailure {
                            assumption: Assumption::IntensityDominationMargin,
                            time: None,
                            state: Some(s),
                            detail: format!(
                                "Q/R = {ratio:.6} exceeds 1 - eta = {:.6} at config {cfg}",
                                1.0 - eta
                            ),
                        });
                    }
                }
            }
            // supports must agree across parent configurations
            for s in 0..n {
                for s2 in 0..n {
                    if s == s2 {
                        continue;
                    }
                    let positive = node.cims.iter().filter(|c| c[[s, s2]] > 0.0).count();
                    if positive != 0 && positive != node.n_configs() {
                        failures.push(AssumptionFailure {
                            assumption: Assumption::SupportInvariance,
                            time: None,
                            state: Some(s),
                            detail: format!(
                                "rate ({s},{s2}) is positive for {positive} of {} parent \
                                 configurations",
                                node.n_configs()
                            ),
                        });
                    }
                }
            }
            node_failures.push((node.name.clone(), failures));
        }
        CtbnValidationReport {
            eta,
            achieved_eta,
            r_max,
            node_failures,
        }
    }
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("{what}: entries must be nonnegative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("{what}: sums to {total}, expected 1")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CtbnValidationReport {
    pub eta: f64,
    pub achieved_eta: f64,
    pub r_max: f64,
    /// Failures per node, by node name.
    pub node_failures: Vec<(String, Vec<AssumptionFailure>)>,
}

impl CtbnValidationReport {
    pub fn passed(&self) -> bool {
        self.node_failures.iter().all(|(_, f)| f.is_empty())
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Validation(self.to_string()))
        }
    }
}

impl std::fmt::Display for CtbnValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            writeln!(
                f,
                "pass: all nodes, achieved eta {:.6}, r_max {:.6}",
                self.achieved_eta, self.r_max
            )?;
        } else {
            for (name, failures) in &self.node_failures {
                for failure in failures {
                    writeln!(f, "fail: node {name:?}: {failure}")?;
                }
            }
        }
        Ok(())
    }
}

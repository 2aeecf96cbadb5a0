//! File formats: JSON schemas for models, evidence and observed
//! trajectories, CSV trace serialization, run summaries and reproducibility
//! manifests.
//!
//! Log-likelihood entries use `null` for log-zero (JSON has no `-inf`).
//! Diagonal entries of rate matrices are ignored on input. All trace output
//! is written with the shortest round-trip float formatting, so identical
//! runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ctbn::{CtbnModel, CtbnNodeSpec, CtbnTrace, InitialLaw};
use crate::error::{Error, Result};
use crate::math::LOG_ZERO;
use crate::mjp::{EmissionModel, Evidence, IntensityModel, StateSpace, Trajectory};
use crate::raoteh::ChainTrace;

/// MJP model file: `{states, nu, tmin, tmax, breakpoints, Q_blocks,
/// R_blocks}`. `breakpoints` lists the interior block boundaries;
/// `Q_blocks`/`R_blocks` carry one entry per block. `R_blocks` may be
/// omitted to apply the default instrumental rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub nu: Vec<f64>,
    pub tmin: f64,
    pub tmax: f64,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(rename = "Q_blocks")]
    pub q_blocks: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R_blocks", default, skip_serializing_if = "Option::is_none")]
    pub r_blocks: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<IntensityModel> {
        let states = StateSpace::new(self.states)?;
        let n = states.size();
        let q_blocks = self
            .q_blocks
            .into_iter()
            .map(|block| matrix_from_rows(block, n))
            .collect::<Result<Vec<_>>>()?;
        IntensityModel::new(
            states,
            self.nu,
            self.tmin,
            self.tmax,
            self.breakpoints,
            q_blocks,
            self.r_blocks,
        )
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, n: usize) -> Result<Array2<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("expected a {n}x{n} matrix")));
    }
    let mut m = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

pub fn load_model(path: &Path) -> Result<IntensityModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.into_model()
}

/// Evidence file: either fixed log-likelihood tables
/// (`{obs_times, loglik_tables}`, `null` = log-zero) or a generative
/// discrete observation model (`{obs_times, emission, y}`), where `y` may be
/// omitted when the file only seeds data resampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceFile {
    pub obs_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik_tables: Option<Vec<Vec<Option<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emission: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<usize>>,
}

/// Parsed evidence: the fixed tables (when derivable) and the generative
/// emission model (when given).
#[derive(Debug, Clone)]
pub struct LoadedEvidence {
    pub evidence: Option<Evidence>,
    pub emission: Option<EmissionModel>,
}

impl LoadedEvidence {
    pub fn require_evidence(self) -> Result<Evidence> {
        self.evidence.ok_or_else(|| {
            Error::invalid("evidence file has no loglik_tables and no (emission, y) pair")
        })
    }

    pub fn require_emission(self) -> Result<EmissionModel> {
        self.emission
            .ok_or_else(|| Error::invalid("evidence file has no emission matrix"))
    }
}

impl EvidenceFile {
    pub fn into_loaded(self) -> Result<LoadedEvidence> {
        let emission = match self.emission {
            Some(rows) => Some(EmissionModel::new(self.obs_times.clone(), rows)?),
            None => None,
        };
        let evidence = match (self.loglik_tables, &emission, &self.y) {
            (Some(tables), _, _) => {
                let tables: Vec<Vec<f64>> = tables
                    .into_iter()
                    .map(|row| row.into_iter().map(|v| v.unwrap_or(LOG_ZERO)).collect())
                    .collect();
                Some(Evidence::new(self.obs_times, tables)?)
            }
            (None, Some(em), Some(ys)) => Some(em.evidence_for(ys)?),
            _ => None,
        };
        Ok(LoadedEvidence { evidence, emission })
    }
}

pub fn load_evidence(path: &Path) -> Result<LoadedEvidence> {
    let text = std::fs::read_to_string(path)?;
    let file: EvidenceFile = serde_json::from_str(&text)?;
    file.into_loaded()
}

/// Network model file: `{nodes, nu, tmin, tmax}`, one entry per node with
/// `{name, states, parents, cim_table, R}`. `parents` lists node names;
/// `cim_table` has one matrix per parent configuration with the last listed
/// parent varying fastest. `R` may be omitted per node. `nu` is either
/// `{"factored": [[..], ..]}` or `{"tabular": [..]}` (node 0 most
/// significant).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtbnFile {
    pub nodes: Vec<CtbnNodeFile>,
    pub nu: InitialLawFile,
    pub tmin: f64,
    pub tmax: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtbnNodeFile {
    pub name: String,
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cim_table: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialLawFile {
    Factored(Vec<Vec<f64>>),
    Tabular(Vec<f64>),
}

impl CtbnFile {
    pub fn into_model(self) -> Result<CtbnModel> {
        let names: Vec<String> = self.nodes.iter().map(|n| n.name.clone()).collect();
        let specs = self
            .nodes
            .into_iter()
            .map(|node| {
                let states = StateSpace::new(node.states)?;
                let n = states.size();
                let parents = node
                    .parents
                    .iter()
                    .map(|p| {
                        names.iter().position(|name| name == p).ok_or_else(|| {
                            Error::invalid(format!(
                                "node {:?} lists unknown parent {p:?}",
                                node.name
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cims = node
                    .cim_table
                    .into_iter()
                    .map(|rows| matrix_from_rows(rows, n))
                    .collect::<Result<Vec<_>>>()?;
                Ok(CtbnNodeSpec {
                    name: node.name,
                    states,
                    parents,
                    cims,
                    r: node.r,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let nu = match self.nu {
            InitialLawFile::Factored(f) => InitialLaw::Factored(f),
            InitialLawFile::Tabular(t) => InitialLaw::Tabular(t),
        };
        CtbnModel::new(specs, nu, self.tmin, self.tmax)
    }
}

pub fn load_ctbn(path: &Path) -> Result<CtbnModel> {
    let text = std::fs::read_to_string(path)?;
    let file: CtbnFile = serde_json::from_str(&text)?;
    file.into_model()
}

/// Observed-node trajectories: a JSON list of
/// `{node, jump_times, states}` with states given as labels
/// (`states[0]` is the initial state; one more state than jump times).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservedNodeFile {
    pub node: String,
    pub jump_times: Vec<f64>,
    pub states: Vec<String>,
}

pub fn load_observed(path: &Path, model: &CtbnModel) -> Result<BTreeMap<usize, Trajectory>> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<ObservedNodeFile> = serde_json::from_str(&text)?;
    let mut observed = BTreeMap::new();
    for entry in entries {
        let w = model
            .node_index(&entry.node)
            .ok_or_else(|| Error::invalid(format!("unknown node {:?}", entry.node)))?;
        let space = model.node(w).states();
        let states = entry
            .states
            .iter()
            .map(|label| {
                space.index_of(label).ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown state {label:?} for node {:?}",
                        entry.node
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let traj = Trajectory::new(model.tmin(), model.tmax(), entry.jump_times, states)?;
        if observed.insert(w, traj).is_some() {
            return Err(Error::invalid(format!(
                "node {:?} listed twice in the observed file",
                entry.node
            )));
        }
    }
    Ok(observed)
}

/// Per-node point evidence for network sampling: a JSON object mapping node
/// names to evidence files.
pub fn load_node_evidence(path: &Path, model: &CtbnModel) -> Result<BTreeMap<usize, Evidence>> {
    let text = std::fs::read_to_string(path)?;
    let entries: BTreeMap<String, EvidenceFile> = serde_json::from_str(&text)?;
    let mut out = BTreeMap::new();
    for (name, file) in entries {
        let w = model
            .node_index(&name)
            .ok_or_else(|| Error::invalid(format!("unknown node {name:?}")))?;
        out.insert(w, file.into_loaded()?.require_evidence()?);
    }
    Ok(out)
}

/// CSV trace of MJP chains: one row per recorded sweep with the probe state
/// columns named by probe time.
pub fn write_trace_csv(traces: &[ChainTrace]) -> String {
    let mut out = String::from("sweep,chain,jump_count,logdens");
    if let Some(t) = traces.first() {
        for p in &t.probes {
            let _ = write!(out, ",probe_{p}");
        }
    }
    out.push('\n');
    for (chain, trace) in traces.iter().enumerate() {
        for r in &trace.records {
            let _ = write!(out, "{},{},{},{}", r.sweep, chain, r.jump_count, r.log_density);
            for &s in &r.probe_states {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
    }
    out
}

/// CSV trace of network chains: total and per-node jump counts, then probe
/// state columns per unobserved node.
pub fn write_ctbn_trace_csv(model: &CtbnModel, traces: &[CtbnTrace]) -> String {
    let mut out = String::from("scan,chain,jump_count,logdens");
    if let Some(t) = traces.first() {
        for &w in &t.unobserved {
            let _ = write!(out, ",{}_jump_count", model.node(w).name());
        }
        for &w in &t.unobserved {
            for p in &t.probes {
                let _ = write!(out, ",probe_{}_{p}", model.node(w).name());
            }
        }
    }
    out.push('\n');
    for (chain, trace) in traces.iter().enumerate() {
        for r in &trace.records {
            let _ = write!(out, "{},{},{},{}", r.scan, chain, r.total_jump_count, r.log_density);
            for &c in &r.node_jump_counts {
                let _ = write!(out, ",{c}");
            }
            for states in &r.probe_states {
                for &s in states {
                    let _ = write!(out, ",{s}");
                }
            }
            out.push('\n');
        }
    }
    out
}

/// JSON-lines snapshots: one compacted trajectory (or network path) per
/// line.
pub fn write_snapshots_jsonl(traces: &[ChainTrace]) -> String {
    let mut out = String::new();
    for (chain, trace) in traces.iter().enumerate() {
        for (sweep, traj) in &trace.snapshots {
            let line = serde_json::json!({
                "chain": chain,
                "sweep": sweep,
                "jump_times": traj.jump_times(),
                "states": traj.states(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    out
}

/// Run summary: per-probe posterior marginals aggregated over chains, plus
/// effective sample sizes of the scalar traces. Jump counts are reported in
/// both conventions (with and without the initial index).
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub chains: usize,
    pub recorded_sweeps: usize,
    pub states: Vec<String>,
    pub probes: Vec<f64>,
    pub probe_marginals: Vec<Vec<f64>>,
    pub mean_jump_count: f64,
    pub mean_transitions: f64,
    pub ess_jump_count: f64,
    pub ess_log_density: f64,
}

pub fn summarize(model: &IntensityModel, traces: &[ChainTrace]) -> Summary {
    let n = model.n_states();
    let probes = traces.first().map(|t| t.probes.clone()).unwrap_or_default();
    let mut probe_marginals = vec![vec![0.0; n]; probes.len()];
    let mut total_records = 0usize;
    let mut jump_sum = 0.0;
    for trace in traces {
        for r in &trace.records {
            total_records += 1;
            jump_sum += r.jump_count as f64;
            for (k, &s) in r.probe_states.iter().enumerate() {
                probe_marginals[k][s] += 1.0;
            }
        }
    }
    for marg in &mut probe_marginals {
        crate::math::normalize(marg);
    }
    let ess_jump: f64 = traces.iter().map(|t| crate::diagnostics::ess(&t.jump_counts())).sum();
    let ess_ld: f64 = traces.iter().map(|t| crate::diagnostics::ess(&t.log_densities())).sum();
    let mean_jump = if total_records > 0 { jump_sum / total_records as f64 } else { 0.0 };
    Summary {
        chains: traces.len(),
        recorded_sweeps: total_records,
        states: model.states().labels().to_vec(),
        probes,
        probe_marginals,
        mean_jump_count: mean_jump,
        mean_transitions: (mean_jump - 1.0).max(0.0),
        ess_jump_count: ess_jump,
        ess_log_density: ess_ld,
    }
}

/// Reproducibility manifest: configuration echo, its hash, the seed and the
/// crate version. A run can be reproduced bit-exactly from this file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(&config),
            config,
        }
    }
}

/// FNV-1a over the canonical JSON encoding, printed as fixed-width hex.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = config.to_string();
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip() {
        let text = r#"{
            "states": ["a", "b"],
            "nu": [0.5, 0.5],
            "tmin": 0.0,
            "tmax": 1.0,
            "breakpoints": [],
            "Q_blocks": [[[0.0, 1.0], [1.0, 0.0]]],
            "R_blocks": [[2.0, 2.0]]
        }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        let model = file.into_model().unwrap();
        assert_eq!(model.n_states(), 2);
        assert_eq!(model.r_rate(0.5, 0), 2.0);
        assert!(model.validate(0.5).passed());
    }

    #[test]
    fn evidence_file_null_is_log_zero() {
        let text = r#"{
            "obs_times": [0.5],
            "loglik_tables": [[0.0, null]]
        }"#;
        let file: EvidenceFile = serde_json::from_str(text).unwrap();
        let evid = file.into_loaded().unwrap().require_evidence().unwrap();
        assert_eq!(evid.log_lik(0)[1], LOG_ZERO);
    }

    #[test]
    fn evidence_file_emission_derives_tables() {
        let text = r#"{
            "obs_times": [0.25, 0.75],
            "emission": [[0.8, 0.2], [0.3, 0.7]],
            "y": [0, 1]
        }"#;
        let loaded = serde_json::from_str::<EvidenceFile>(text)
            .unwrap()
            .into_loaded()
            .unwrap();
        let evid = loaded.evidence.unwrap();
        assert!((evid.log_lik(0)[0] - 0.8f64.ln()).abs() < 1e-12);
        assert!((evid.log_lik(1)[1] - 0.7f64.ln()).abs() < 1e-12);
        assert!(loaded.emission.is_some());
    }

    #[test]
    fn ctbn_file_parses_chain() {
        let text = r#"{
            "nodes": [
                {"name": "u", "states": ["off", "on"], "parents": [],
                 "cim_table": [[[0.0, 1.0], [1.0, 0.0]]], "R": [2.0, 2.0]},
                {"name": "w", "states": ["lo", "hi"], "parents": ["u"],
                 "cim_table": [[[0.0, 1.0], [1.0, 0.0]], [[0.0, 2.0], [2.0, 0.0]]]}
            ],
            "nu": {"factored": [[0.5, 0.5], [1.0, 0.0]]},
            "tmin": 0.0,
            "tmax": 2.0
        }"#;
        let model = serde_json::from_str::<CtbnFile>(text)
            .unwrap()
            .into_model()
            .unwrap();
        assert_eq!(model.n_nodes(), 2);
        assert_eq!(model.node(1).parents(), &[0]);
        assert_eq!(model.node(1).q_rate(1, 0, 1), 2.0);
        // default R rule: 2 * max over configs of the leaving rate
        assert_eq!(model.node(1).r_rate(0), 4.0);
        assert!(model.validate(0.5).passed());
    }

    #[test]
    fn trace_csv_shape() {
        use crate::raoteh::{ChainConfig, ChainInit};
        let model = ModelFile {
            states: vec!["a".into(), "b".into()],
            nu: vec![1.0, 0.0],
            tmin: 0.0,
            tmax: 1.0,
            breakpoints: vec![],
            q_blocks: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
            r_blocks: Some(vec![vec![2.0, 2.0]]),
        }
        .into_model()
        .unwrap();
        let cfg = ChainConfig::new(10, 2, 2, vec![0.5]).unwrap();
        let mut rng = crate::raoteh::chain_rng(5, 0);
        let trace = crate::raoteh::run_chain(
            &model,
            &Evidence::none(),
            &ChainInit::FromPrior,
            &cfg,
            &mut rng,
        )
        .unwrap();
        let csv = write_trace_csv(&[trace]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "sweep,chain,jump_count,logdens,probe_0.5");
        assert_eq!(lines.count(), 4); // sweeps 2,4,6,8
    }

    #[test]
    fn manifest_hash_is_stable() {
        let a = Manifest::new("sample", 7, serde_json::json!({"sweeps": 100}));
        let b = Manifest::new("sample", 7, serde_json::json!({"sweeps": 100}));
        assert_eq!(a.config_hash, b.config_hash);
        let c = Manifest::new("sample", 7, serde_json::json!({"sweeps": 101}));
        assert_ne!(a.config_hash, c.config_hash);
    }
}

//! Command-line driver: posterior sampling (`sample`, `ctbn-sample`),
//! grid-oracle marginals (`oracle`), chain diagnostics (`diagnose`) and
//! model validation (`validate`). Every stochastic subcommand requires an
//! explicit seed, and identical configurations produce byte-identical trace
//! output. `JUMPCHAIN_THREADS` caps the chain worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpchain::ctbn::{self, CtbnChainConfig, CtbnInit};
use jumpchain::diagnostics::{
    drift_estimate, ess, geweke_joint_test, rao_teh_step_dropping_potentials, tv_distance,
    GewekeConfig,
};
use jumpchain::io;
use jumpchain::mjp::{Evidence, IntensityModel, Trajectory};
use jumpchain::oracle::{grid_posterior, richardson_extrapolate};
use jumpchain::raoteh::{
    self, chain_rng, default_probes, rao_teh_step, ChainConfig, ChainInit,
};

#[derive(Parser)]
#[command(name = "jumpchain", version, about = "Trajectory posterior sampling for hidden Markov jump processes and CTBNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the trajectory posterior of a hidden MJP.
    Sample(SampleArgs),
    /// Random-scan Gibbs sampling of a CTBN with observed nodes.
    CtbnSample(CtbnSampleArgs),
    /// Fine-grid smoothing marginals (brute-force ground truth).
    Oracle(OracleArgs),
    /// Drift, invariance, total-variation and ESS diagnostics.
    Diagnose(DiagnoseArgs),
    /// Check a model against the sampler's ergodicity preconditions.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Comma-separated probe times; defaults to observation times plus the
    /// window endpoints.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<f64>>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CtbnSampleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Fully observed node trajectories (JSON list).
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Optional per-node point evidence (JSON object keyed by node name).
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    grid_step: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, value_parser = ["drift", "geweke", "tv", "ess"])]
    suite: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Sweep budget for the tv/ess suites.
    #[arg(long, default_value_t = 20_000)]
    sweeps: usize,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Output JSON report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
}

enum CliError {
    Config(String),
    Runtime(jumpchain::Error),
}

impl From<jumpchain::Error> for CliError {
    fn from(e: jumpchain::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sample(args) => run_sample(args),
        Command::CtbnSample(args) => run_ctbn_sample(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Diagnose(args) => run_diagnose(args),
        Command::Validate(args) => run_validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn threads_for(chains: usize) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("JUMPCHAIN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(chains.max(1))
}

fn load_evidence_or_none(path: &Option<PathBuf>) -> CliResult<Evidence> {
    match path {
        None => Ok(Evidence::none()),
        Some(p) => Ok(io::load_evidence(p)?.require_evidence()?),
    }
}

fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Config(format!("--out {}: {e}", dir.display()))
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(e.into()))
}

fn run_sample(args: SampleArgs) -> CliResult<()> {
    if args.sweeps == 0 {
        return config_err("--sweeps must be positive");
    }
    if args.burnin >= args.sweeps {
        return config_err("--burnin must be smaller than --sweeps");
    }
    if args.thin == 0 {
        return config_err("--thin must be positive");
    }
    if args.chains == 0 {
        return config_err("--chains must be positive");
    }
    let model = io::load_model(&args.model)?;
    model.validate(1e-9).into_result()?;
    let evidence = load_evidence_or_none(&args.evidence)?;
    evidence.check_against(&model)?;
    let probes = args
        .probes
        .clone()
        .unwrap_or_else(|| default_probes(&model, &evidence));
    for &p in &probes {
        if p < model.tmin() || p > model.tmax() {
            return config_err(format!("--probes value {p} outside the model window"));
        }
    }
    let mut config = ChainConfig::new(args.sweeps, args.burnin, args.thin, probes.clone())?;
    config.snapshot_every = args.snapshot_every;

    ensure_out_dir(&args.out)?;
    let threads = threads_for(args.chains);
    let traces = raoteh::run_chains(
        &model,
        &evidence,
        &ChainInit::FromPrior,
        &config,
        args.seed,
        args.chains,
        threads,
    )?;

    write_file(&args.out.join("trace.csv"), &io::write_trace_csv(&traces))?;
    if args.snapshot_every.is_some() {
        write_file(
            &args.out.join("snapshots.jsonl"),
            &io::write_snapshots_jsonl(&traces),
        )?;
    }
    let summary = io::summarize(&model, &traces);
    write_file(
        &args.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    let manifest = io::Manifest::new(
        "sample",
        args.seed,
        serde_json::json!({
            "model": args.model.display().to_string(),
            "evidence": args.evidence.as_ref().map(|p| p.display().to_string()),
            "sweeps": args.sweeps,
            "burnin": args.burnin,
            "thin": args.thin,
            "chains": args.chains,
            "probes": probes,
            "snapshot_every": args.snapshot_every,
            "seed": args.seed,
        }),
    );
    write_file(
        &args.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    println!(
        "wrote {} recorded sweeps over {} chains to {}",
        summary.recorded_sweeps,
        args.chains,
        args.out.display()
    );
    Ok(())
}

fn run_ctbn_sample(args: CtbnSampleArgs) -> CliResult<()> {
    if args.sweeps == 0 {
        return config_err("--sweeps must be positive");
    }
    if args.burnin >= args.sweeps {
        return config_err("--burnin must be smaller than --sweeps");
    }
    if args.thin == 0 {
        return config_err("--thin must be positive");
    }
    if args.chains == 0 {
        return config_err("--chains must be positive");
    }
    let model = io::load_ctbn(&args.model)?;
    model.validate(1e-9).into_result()?;
    let observed = match &args.observed {
        Some(p) => io::load_observed(p, &model)?,
        None => BTreeMap::new(),
    };
    let node_evidence = match &args.evidence {
        Some(p) => io::load_node_evidence(p, &model)?,
        None => BTreeMap::new(),
    };
    let probes = args.probes.clone().unwrap_or_else(|| {
        let mut ps = vec![model.tmin()];
        for evid in node_evidence.values() {
            ps.extend_from_slice(evid.obs_times());
        }
        ps.push(model.tmax());
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ps.dedup();
        ps
    });
    for &p in &probes {
        if p < model.tmin() || p > model.tmax() {
            return config_err(format!("--probes value {p} outside the model window"));
        }
    }
    let config = CtbnChainConfig::new(args.sweeps, args.burnin, args.thin, probes.clone())?;

    ensure_out_dir(&args.out)?;
    let threads = threads_for(args.chains);
    let traces = ctbn::run_ctbn_chains(
        &model,
        &observed,
        &node_evidence,
        &CtbnInit::Constant,
        &config,
        args.seed,
        args.chains,
        threads,
    )?;

    write_file(
        &args.out.join("trace.csv"),
        &io::write_ctbn_trace_csv(&model, &traces),
    )?;
    let summary = summarize_ctbn(&model, &traces);
    write_file(&args.out.join("summary.json"), &summary)?;
    let manifest = io::Manifest::new(
        "ctbn-sample",
        args.seed,
        serde_json::json!({
            "model": args.model.display().to_string(),
            "observed": args.observed.as_ref().map(|p| p.display().to_string()),
            "evidence": args.evidence.as_ref().map(|p| p.display().to_string()),
            "sweeps": args.sweeps,
            "burnin": args.burnin,
            "thin": args.thin,
            "chains": args.chains,
            "probes": probes,
            "seed": args.seed,
        }),
    );
    write_file(
        &args.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    println!("wrote {} chains to {}", args.chains, args.out.display());
    Ok(())
}

fn summarize_ctbn(model: &ctbn::CtbnModel, traces: &[ctbn::CtbnTrace]) -> String {
    let mut nodes = Vec::new();
    if let Some(first) = traces.first() {
        for (k, &w) in first.unobserved.iter().enumerate() {
            let n = model.node(w).n_states();
            let mut marginals = Vec::new();
            for p in 0..first.probes.len() {
                let mut acc = vec![0.0; n];
                let mut total = 0.0;
                for trace in traces {
                    for r in &trace.records {
                        acc[r.probe_states[k][p]] += 1.0;
                        total += 1.0;
                    }
                }
                if total > 0.0 {
                    for a in &mut acc {
                        *a /= total;
                    }
                }
                marginals.push(acc);
            }
            nodes.push(serde_json::json!({
                "node": model.node(w).name(),
                "states": model.node(w).states().labels(),
                "probe_marginals": marginals,
            }));
        }
    }
    let ess_total: f64 = traces.iter().map(|t| ess(&t.total_jump_counts())).sum();
    let summary = serde_json::json!({
        "chains": traces.len(),
        "recorded_scans": traces.iter().map(|t| t.records.len()).sum::<usize>(),
        "probes": traces.first().map(|t| t.probes.clone()).unwrap_or_default(),
        "nodes": nodes,
        "ess_total_jump_count": ess_total,
    });
    serde_json::to_string_pretty(&summary).unwrap()
}

fn run_oracle(args: OracleArgs) -> CliResult<()> {
    if !(args.grid_step > 0.0) {
        return config_err("--grid-step must be positive");
    }
    let model = io::load_model(&args.model)?;
    let evidence = load_evidence_or_none(&args.evidence)?;
    let grid = grid_posterior(&model, &evidence, args.grid_step)?;
    let mut csv = String::from("time");
    for label in model.states().labels() {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    for (t, marg) in grid.times().iter().zip(grid.marginals()) {
        let _ = write!(csv, "{t}");
        for p in marg {
            let _ = write!(csv, ",{p}");
        }
        csv.push('\n');
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(jumpchain::Error::from)?;
        }
    }
    write_file(&args.out, &csv)?;
    println!("wrote {} grid marginals to {}", grid.times().len(), args.out.display());
    Ok(())
}

fn run_validate(args: ValidateArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.model).map_err(jumpchain::Error::from)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(jumpchain::Error::from)?;
    let passed = if value.get("nodes").is_some() {
        let model = io::load_ctbn(&args.model)?;
        let report = model.validate(args.eta);
        print!("{report}");
        report.passed()
    } else {
        let model = io::load_model(&args.model)?;
        let report = model.validate(args.eta);
        print!("{report}");
        report.passed()
    };
    if passed {
        Ok(())
    } else {
        Err(CliError::Runtime(jumpchain::Error::Validation(
            "assumptions violated, see report above".to_string(),
        )))
    }
}

fn run_diagnose(args: DiagnoseArgs) -> CliResult<()> {
    let model = io::load_model(&args.model)?;
    model.validate(1e-9).into_result()?;
    let report = match args.suite.as_str() {
        "drift" => diagnose_drift(&args, &model)?,
        "geweke" => diagnose_geweke(&args, &model)?,
        "tv" => diagnose_tv(&args, &model)?,
        "ess" => diagnose_ess(&args, &model)?,
        other => return config_err(format!("--suite {other} is not a known suite")),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(jumpchain::Error::from)?;
        }
    }
    write_file(&args.out, &serde_json::to_string_pretty(&report).unwrap())?;
    println!("wrote {} report to {}", args.suite, args.out.display());
    Ok(())
}

/// Alternating-state trajectory with the given jump count (including the
/// initial index) on the model window.
fn alternating_seed(model: &IntensityModel, jump_count: usize) -> jumpchain::Result<Trajectory> {
    let span = model.tmax() - model.tmin();
    let jumps: Vec<f64> = (1..jump_count)
        .map(|i| model.tmin() + span * i as f64 / jump_count as f64)
        .collect();
    let states: Vec<usize> = (0..jump_count).map(|i| i % model.n_states()).collect();
    Trajectory::new(model.tmin(), model.tmax(), jumps, states)
}

fn diagnose_drift(args: &DiagnoseArgs, model: &IntensityModel) -> CliResult<serde_json::Value> {
    if args.reps < 100 {
        return config_err("--reps must be at least 100 for the drift suite");
    }
    let evidence = load_evidence_or_none(&args.evidence)?;
    let seeds = [20usize, 60, 120]
        .iter()
        .map(|&j| alternating_seed(model, j))
        .collect::<jumpchain::Result<Vec<_>>>()?;
    let mut rng = chain_rng(args.seed, 0);
    let report = drift_estimate(
        |x, r| rao_teh_step(model, &evidence, x, r),
        &seeds,
        args.reps,
        &mut rng,
    )?;
    Ok(serde_json::json!({
        "suite": "drift",
        "seed_jump_counts": report.seed_jump_counts,
        "means": report.means,
        "std_errors": report.std_errors,
        "reps": report.reps,
        "slope": report.slope,
        "intercept": report.intercept,
        "slope_se": report.slope_se,
        "slope_below_one_by_3se": report.slope_below_one_by(3.0),
    }))
}

fn diagnose_geweke(args: &DiagnoseArgs, model: &IntensityModel) -> CliResult<serde_json::Value> {
    let path = match &args.evidence {
        Some(p) => p,
        None => return config_err("--evidence with an emission matrix is required for geweke"),
    };
    let emission = io::load_evidence(path)?.require_emission()?;
    let probe = 0.5 * (model.tmin() + model.tmax());
    let probe_stat = move |x: &Trajectory, _y: &Vec<usize>| x.evaluate(probe).unwrap() as f64;
    let stats: Vec<(&str, &dyn Fn(&Trajectory, &Vec<usize>) -> f64)> = vec![
        ("jump_count", &|x: &Trajectory, _y: &Vec<usize>| x.jump_count() as f64),
        ("occupation_0", &|x: &Trajectory, _y: &Vec<usize>| x.occupation_time(0)),
        ("probe_state", &probe_stat),
    ];
    let mut rng = chain_rng(args.seed, 0);
    let config = GewekeConfig {
        n: args.reps,
        thin: 3,
        burnin: 100,
    };
    let em = &emission;
    let report = geweke_joint_test(
        &mut rng,
        |r| Ok(jumpchain::thinning::sample_prior_path(model, r)?.compact()),
        |x, r| em.sample(x, r),
        |x, y, r| rao_teh_step(model, &em.evidence_for(y)?, &x, r),
        &stats,
        &config,
    )?;
    let results: Vec<serde_json::Value> = report
        .results
        .iter()
        .map(|(name, ks)| {
            serde_json::json!({
                "statistic": name,
                "ks": ks.statistic,
                "p_value": ks.p_value,
            })
        })
        .collect();
    // mutation check: the same battery must reject a kernel that drops the
    // potentials
    let mut rng = chain_rng(args.seed, 1);
    let broken = geweke_joint_test(
        &mut rng,
        |r| Ok(jumpchain::thinning::sample_prior_path(model, r)?.compact()),
        |x, r| em.sample(x, r),
        |x, y, r| rao_teh_step_dropping_potentials(model, &em.evidence_for(y)?, &x, r),
        &stats,
        &config,
    )?;
    Ok(serde_json::json!({
        "suite": "geweke",
        "n": args.reps,
        "results": results,
        "min_p": report.min_p(),
        "all_pass_at_0.001": report.all_pass(0.001),
        "mutation_min_p": broken.min_p(),
    }))
}

fn diagnose_tv(args: &DiagnoseArgs, model: &IntensityModel) -> CliResult<serde_json::Value> {
    let evidence = load_evidence_or_none(&args.evidence)?;
    let span = model.tmax() - model.tmin();
    let step = args.grid_step.unwrap_or(1e-3 * span);
    let probes = default_probes(model, &evidence);
    let config = ChainConfig::new(args.sweeps, args.sweeps / 10, 1, probes.clone())?;
    let mut rng = chain_rng(args.seed, 0);
    let trace = raoteh::run_chain(model, &evidence, &ChainInit::FromPrior, &config, &mut rng)?;
    let coarse = grid_posterior(model, &evidence, step)?;
    let fine = grid_posterior(model, &evidence, step / 2.0)?;
    let mut per_probe = Vec::new();
    let mut worst = 0.0f64;
    for (k, &t) in probes.iter().enumerate() {
        let (oracle_marg, disc) = richardson_extrapolate(coarse.marginal_at(t), fine.marginal_at(t));
        let empirical = trace.probe_marginal(k, model.n_states());
        let tv = tv_distance(&empirical, &oracle_marg)?;
        worst = worst.max(tv);
        per_probe.push(serde_json::json!({
            "probe": t,
            "tv": tv,
            "discretization": disc,
            "empirical": empirical,
            "oracle": oracle_marg,
        }));
    }
    Ok(serde_json::json!({
        "suite": "tv",
        "sweeps": args.sweeps,
        "grid_step": step,
        "per_probe": per_probe,
        "max_tv": worst,
    }))
}

fn diagnose_ess(args: &DiagnoseArgs, model: &IntensityModel) -> CliResult<serde_json::Value> {
    let evidence = load_evidence_or_none(&args.evidence)?;
    let probes = default_probes(model, &evidence);
    let config = ChainConfig::new(args.sweeps, args.sweeps / 10, 1, probes)?;
    let mut rng = chain_rng(args.seed, 0);
    let trace = raoteh::run_chain(model, &evidence, &ChainInit::FromPrior, &config, &mut rng)?;
    let jumps = trace.jump_counts();
    let lds = trace.log_densities();
    Ok(serde_json::json!({
        "suite": "ess",
        "recorded_sweeps": jumps.len(),
        "ess_jump_count": ess(&jumps),
        "ess_log_density": ess(&lds),
        "mean_jump_count": jumps.iter().sum::<f64>() / jumps.len().max(1) as f64,
    }))
}

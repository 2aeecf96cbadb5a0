//! The trajectory-space Markov kernel targeting the smoothing posterior:
//! alternately resample virtual jump times from the thinned instrumental
//! process along the current path, then redraw the whole skeleton by FFBS,
//! keeping only true jumps. Includes the sequential chain driver and a
//! threaded multi-chain runner.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{sample_poisson_process, RateFunction};
use crate::ffbs::{backward_sample, build_skeleton_hmm, forward_filter};
use crate::mjp::{Evidence, EventSequence, IntensityModel, Trajectory, TIE_REL_TOL};
use crate::thinning::sample_prior_path;

/// Samples the auxiliary event times: a Poisson process on each constant
/// segment of the current path with rate `R(t; state) - Q(t; state)`, merged
/// with the retained true jump times and `tmin`. The result is sorted and
/// separated by the tie tolerance; colliding auxiliary points (a
/// probability-zero event) are resampled segment by segment.
pub fn resample_virtual<R: Rng + ?Sized>(
    model: &IntensityModel,
    traj: &Trajectory,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let tie = TIE_REL_TOL * (model.tmax() - model.tmin());
    let mut times = Vec::with_capacity(traj.jump_count() + 4);
    times.push(model.tmin());
    for (a, b, s) in traj.segments() {
        if a > model.tmin() {
            times.push(a);
        }
        let rate = survivor_rate(model, a, b, s);
        let mut placed = false;
        for _ in 0..64 {
            let points = sample_poisson_process(&rate, a, b, rng)?;
            if well_separated(&points, a, b, tie) {
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
    debug_assert!(times.windows(2).all(|w| w[1] > w[0]));
    Ok(times)
}

/// Piecewise-constant `R(t;s) - Q(t;s)` on `[a, b]`, clamped at zero so the
/// operation stays total on models that fail validation.
fn survivor_rate(model: &IntensityModel, a: f64, b: f64, s: usize) -> RateFunction {
    let mut starts = vec![a];
    let mut values = vec![(model.r_rate(a, s) - model.leaving_rate(a, s)).max(0.0)];
    for &bp in model.breakpoints() {
        if bp > a && bp < b {
            starts.push(bp);
            values.push((model.r_rate(bp, s) - model.leaving_rate(bp, s)).max(0.0));
        }
    }
    RateFunction::new(starts, values, b).expect("segment bounds are ordered")
}

fn well_separated(points: &[f64], a: f64, b: f64, tie: f64) -> bool {
    let mut prev = a;
    for &p in points {
        if p - prev < tie {
            return false;
        }
        prev = p;
    }
    b - prev >= tie
}

/// One transition of the trajectory kernel: virtual-jump refresh, exact
/// skeleton redraw given the refreshed event times, then compaction.
pub fn rao_teh_step<R: Rng + ?Sized>(
    model: &IntensityModel,
    evidence: &Evidence,
    traj: &Trajectory,
    rng: &mut R,
) -> Result<Trajectory> {
    let times = resample_virtual(model, traj, rng)?;
    let hmm = build_skeleton_hmm(model, &times, evidence)?;
    let filtered = forward_filter(&hmm)?;
    let skeleton = backward_sample(&hmm, &filtered, rng)?;
    let ev = EventSequence::new(model.tmin(), model.tmax(), times, skeleton)?;
    Ok(ev.compact())
}

/// Per-recorded-sweep statistics.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub sweep: usize,
    pub jump_count: usize,
    pub log_density: f64,
    pub probe_states: Vec<usize>,
}

/// Output of a single chain run.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub probes: Vec<f64>,
    pub records: Vec<SweepRecord>,
    pub snapshots: Vec<(usize, Trajectory)>,
    pub final_trajectory: Trajectory,
}

impl ChainTrace {
    pub fn jump_counts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.jump_count as f64).collect()
    }

    pub fn log_densities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log_density).collect()
    }

    /// Empirical state distribution at probe `k` over recorded sweeps.
    pub fn probe_marginal(&self, k: usize, n_states: usize) -> Vec<f64> {
        let mut dist = vec![0.0; n_states];
        for r in &self.records {
            dist[r.probe_states[k]] += 1.0;
        }
        crate::math::normalize(&mut dist);
        dist
    }
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub sweeps: usize,
    pub burnin: usize,
    pub thin: usize,
    pub probes: Vec<f64>,
    /// Store the full compacted trajectory every `k` sweeps.
    pub snapshot_every: Option<usize>,
}

impl ChainConfig {
    pub fn new(sweeps: usize, burnin: usize, thin: usize, probes: Vec<f64>) -> Result<Self> {
        if sweeps > 0 && burnin >= sweeps {
            return Err(Error::invalid("burn-in must be smaller than sweep count"));
        }
        if thin == 0 {
            return Err(Error::invalid("thinning stride must be positive"));
        }
        Ok(ChainConfig {
            sweeps,
            burnin,
            thin,
            probes,
            snapshot_every: None,
        })
    }
}

/// Default probe times: the observation times plus the window endpoints.
pub fn default_probes(model: &IntensityModel, evidence: &Evidence) -> Vec<f64> {
    let mut probes = vec![model.tmin()];
    probes.extend_from_slice(evidence.obs_times());
    probes.push(model.tmax());
    probes.dedup_by(|a, b| a == b);
    probes
}

#[derive(Debug, Clone)]
pub enum ChainInit {
    /// Draw the initial trajectory from the prior by thinning (guarantees
    /// positive prior density).
    FromPrior,
    Fixed(Trajectory),
}

/// Runs one chain. Deterministic given the RNG state.
pub fn run_chain<R: Rng + ?Sized>(
    model: &IntensityModel,
    evidence: &Evidence,
    init: &ChainInit,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<ChainTrace> {
    evidence.check_against(model)?;
    for &p in &config.probes {
        if p < model.tmin() || p > model.tmax() {
            return Err(Error::TimeOutOfRange {
                t: p,
                tmin: model.tmin(),
                tmax: model.tmax(),
            });
        }
    }
    let mut current = match init {
        ChainInit::FromPrior => sample_prior_path(model, rng)?.compact(),
        ChainInit::Fixed(t) => t.clone(),
    };
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    for sweep in 0..config.sweeps {
        current = rao_teh_step(model, evidence, &current, rng)?;
        if sweep >= config.burnin && (sweep - config.burnin) % config.thin == 0 {
            let log_density =
                model.path_log_density(&current) + evidence.log_likelihood(&current)?;
            let probe_states = config
                .probes
                .iter()
                .map(|&t| current.evaluate(t))
                .collect::<Result<Vec<_>>>()?;
            records.push(SweepRecord {
                sweep,
                jump_count: current.jump_count(),
                log_density,
                probe_states,
            });
            if let Some(k) = config.snapshot_every {
                if k > 0 && (sweep - config.burnin) % k == 0 {
                    snapshots.push((sweep, current.clone()));
                }
            }
        }
    }
    Ok(ChainTrace {
        probes: config.probes.clone(),
        records,
        snapshots,
        final_trajectory: current,
    })
}

/// Seedable stream for chain `index`: all chains share one base seed and use
/// the chain index as the stream id, so runs are reproducible regardless of
/// the thread schedule.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `chains` independent chains on up to `threads` worker threads.
/// Results are ordered by chain index.
pub fn run_chains(
    model: &IntensityModel,
    evidence: &Evidence,
    init: &ChainInit,
    config: &ChainConfig,
    seed: u64,
    chains: usize,
    threads: usize,
) -> Result<Vec<ChainTrace>> {
    let slots: Mutex<Vec<Option<Result<ChainTrace>>>> =
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
                let result = run_chain(model, evidence, init, config, &mut rng);
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

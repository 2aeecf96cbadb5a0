//! Statistical correctness of the event-time samplers and the thinning
//! prior: closed-form means and survival probabilities, goodness of fit of
//! Poisson counts, process superposition, the matrix-exponential marginal of
//! the compacted prior, and the self-consistency of the joint density.

mod common;

use common::{symmetric_q, tv_sampling_floor, two_state_model};
use jumpchain::diagnostics::{ks_two_sample, tv_distance};
use jumpchain::events::{holding_log_density, sample_holding_time, sample_poisson_process, RateFunction};
use jumpchain::oracle::transition_probability;
use jumpchain::raoteh::chain_rng;
use jumpchain::thinning::{joint_log_density, sample_prior_path};
use jumpchain::mjp::EventSequence;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn holding_time_mean_constant_rate() {
    let rate = RateFunction::constant(0.0, 1e6, 2.0).unwrap();
    let mut rng = chain_rng(201, 0);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += sample_holding_time(0.0, &rate, 1e6, &mut rng).unwrap().unwrap();
    }
    let mean = sum / n as f64;
    assert!((mean - 0.5).abs() < 0.002, "mean={mean}");
}

#[test]
fn holding_time_piecewise_survival() {
    // rate 1 on [0,1), 3 on [1,2]: P(W > 1.5) = exp(-1) * exp(-1.5)
    let rate = RateFunction::new(vec![0.0, 1.0], vec![1.0, 3.0], 2.0).unwrap();
    let mut rng = chain_rng(202, 0);
    let n = 1_000_000;
    let mut beyond = 0usize;
    for _ in 0..n {
        match sample_holding_time(0.0, &rate, 2.0, &mut rng).unwrap() {
            Some(w) if w > 1.5 => beyond += 1,
            None => beyond += 1,
            _ => {}
        }
    }
    let frac = beyond as f64 / n as f64;
    let expect = (-2.5f64).exp();
    assert!((frac - expect).abs() < 0.002, "frac={frac} expect={expect}");

    // cross-check against numerical integration of the density up to 1.5
    let mass = integrate_density(&rate, 0.0, 1.5);
    assert!(((1.0 - mass) - expect).abs() < 1e-10);
}

#[test]
fn holding_density_mass_plus_survival_is_one() {
    let rate = RateFunction::new(vec![0.0, 0.7, 1.3], vec![2.0, 0.5, 4.0], 2.0).unwrap();
    let mass = integrate_density(&rate, 0.0, 2.0);
    let survival = (-rate.integral(0.0, 2.0)).exp();
    assert!((mass + survival - 1.0).abs() < 1e-10, "mass={mass} survival={survival}");
}

/// Composite Simpson integration of `exp(holding_log_density)` split at the
/// rate breakpoints.
fn integrate_density(rate: &RateFunction, u: f64, hi: f64) -> f64 {
    let mut cuts = vec![u];
    for &t in &[0.7, 1.0, 1.3] {
        if t > u && t < hi {
            cuts.push(t);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let density = |w: f64| holding_log_density(u, w, rate).exp();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let n = 2000usize;
        let h = (b - a) / n as f64;
        // open-interval evaluation: the density is right-discontinuous at
        // breakpoints
        let mut acc = 0.0;
        for k in 0..n {
            let lo = a + k as f64 * h;
            acc += h / 6.0 * (density(lo + 1e-12) + 4.0 * density(lo + h / 2.0) + density(lo + h - 1e-12));
        }
        total += acc;
    }
    total
}

#[test]
fn poisson_count_means() {
    let mut rng = chain_rng(203, 0);
    let rate = RateFunction::constant(0.0, 2.0, 3.0).unwrap();
    let n = 1_000_000;
    let mut total = 0usize;
    for _ in 0..n {
        total += sample_poisson_process(&rate, 0.0, 2.0, &mut rng).unwrap().len();
    }
    let mean = total as f64 / n as f64;
    assert!((mean - 6.0).abs() < 0.01, "mean={mean}");
}

#[test]
fn poisson_counts_pass_chi_square() {
    let mut rng = chain_rng(204, 0);
    let rate = RateFunction::new(vec![0.0, 1.0], vec![2.0, 1.0], 2.0).unwrap();
    let mass = rate.integral(0.0, 2.0); // 3.0
    let n = 100_000usize;
    let max_count = 16usize;
    let mut observed = vec![0.0; max_count + 1];
    for _ in 0..n {
        let k = sample_poisson_process(&rate, 0.0, 2.0, &mut rng).unwrap().len();
        observed[k.min(max_count)] += 1.0;
    }
    // Poisson pmf with the tail merged into the last bin
    let mut expected = vec![0.0; max_count + 1];
    let mut pmf = (-mass).exp();
    let mut cumulative = 0.0;
    for (k, e) in expected.iter_mut().enumerate().take(max_count) {
        *e = pmf * n as f64;
        cumulative += pmf;
        pmf *= mass / (k + 1) as f64;
    }
    expected[max_count] = (1.0 - cumulative) * n as f64;

    // merge bins with expected < 5
    let mut chi2 = 0.0;
    let mut dof: i64 = -1;
    let mut obs_acc = 0.0;
    let mut exp_acc = 0.0;
    for (o, e) in observed.iter().zip(&expected) {
        obs_acc += o;
        exp_acc += e;
        if exp_acc >= 5.0 {
            chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
            dof += 1;
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    if exp_acc > 0.0 {
        chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
        dof += 1;
    }
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2={chi2} dof={dof} p={p}");
}

#[test]
fn superposition_matches_single_process() {
    let mut rng = chain_rng(205, 0);
    let r1 = RateFunction::constant(0.0, 50.0, 1.3).unwrap();
    let r2 = RateFunction::constant(0.0, 50.0, 0.7).unwrap();
    let merged_rate = RateFunction::constant(0.0, 50.0, 2.0).unwrap();
    let mut gaps_merged = Vec::new();
    let mut gaps_single = Vec::new();
    for _ in 0..400 {
        let mut a = sample_poisson_process(&r1, 0.0, 50.0, &mut rng).unwrap();
        let b = sample_poisson_process(&r2, 0.0, 50.0, &mut rng).unwrap();
        a.extend(b);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        gaps_merged.extend(a.windows(2).map(|w| w[1] - w[0]));
        let c = sample_poisson_process(&merged_rate, 0.0, 50.0, &mut rng).unwrap();
        gaps_single.extend(c.windows(2).map(|w| w[1] - w[0]));
    }
    let ks = ks_two_sample(&gaps_merged, &gaps_single).unwrap();
    assert!(ks.p_value > 0.001, "ks={} p={}", ks.statistic, ks.p_value);
}

#[test]
fn prior_marginal_matches_matrix_exponential() {
    let model = two_state_model();
    let mut rng = chain_rng(206, 0);
    let n = 200_000;
    let t = 0.5;
    let mut counts = vec![0.0; 2];
    for _ in 0..n {
        let traj = sample_prior_path(&model, &mut rng).unwrap().compact();
        counts[traj.evaluate(t).unwrap()] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= n as f64);
    let kernel = transition_probability(&symmetric_q(), t);
    let expect: Vec<f64> = (0..2)
        .map(|s| 0.5 * kernel[[0, s]] + 0.5 * kernel[[1, s]])
        .collect();
    let tv = tv_distance(&counts, &expect).unwrap();
    let floor = tv_sampling_floor(2, n);
    assert!(tv < 3.0 * floor.max(1e-3), "tv={tv}");
}

/// Histogram self-consistency of the joint density of the redundant pair:
/// outcomes with at most two events are binned by event times (10 bins per
/// event); the empirical cell frequencies must match
/// `exp(joint_log_density) * cell volume`. With the homogeneous instrumental
/// rate the density is constant in the times, so the midpoint value is
/// exact. Individual cells are allowed the usual 3-sigma fluctuation band;
/// with ~400 cells a few random exceedances are expected, so the gate is on
/// the exceedance fraction and a hard 6-sigma cap.
#[test]
fn joint_density_histogram_self_consistency() {
    let model = two_state_model();
    let mut rng = chain_rng(207, 0);
    let n = 1_000_000usize;
    let bins = 10usize;
    let width = 0.1;

    // cell index: events 0 -> s0 (2 cells); events 1 -> (s0, bin, s1);
    // events 2 -> (s0, b1, s1, b2, s2) with b1 <= b2
    let mut counts: std::collections::HashMap<(usize, usize, usize, usize, usize, usize), f64> =
        std::collections::HashMap::new();
    for _ in 0..n {
        let ev = sample_prior_path(&model, &mut rng).unwrap();
        let events = ev.len() - 1;
        if events > 2 {
            continue;
        }
        let key = match events {
            0 => (0, ev.states()[0], 0, 0, 0, 0),
            1 => (
                1,
                ev.states()[0],
                (ev.times()[1] / width) as usize,
                ev.states()[1],
                0,
                0,
            ),
            _ => (
                2,
                ev.states()[0],
                (ev.times()[1] / width) as usize,
                ev.states()[1],
                (ev.times()[2] / width) as usize,
                ev.states()[2],
            ),
        };
        *counts.entry(key).or_insert(0.0) += 1.0;
    }

    let mut cells = 0usize;
    let mut beyond3 = 0usize;
    let mut worst_z = 0.0f64;
    let mut check = |prob: f64, observed: f64| {
        let se = (prob * (1.0 - prob) / n as f64).sqrt().max(1e-12);
        let z = ((observed / n as f64) - prob).abs() / se;
        cells += 1;
        if z > 3.0 {
            beyond3 += 1;
        }
        worst_z = worst_z.max(z);
    };

    let density = |times: Vec<f64>, states: Vec<usize>| {
        let ev = EventSequence::new(0.0, 1.0, times, states).unwrap();
        joint_log_density(&model, &ev).exp()
    };

    for s0 in 0..2 {
        let observed = counts.get(&(0, s0, 0, 0, 0, 0)).copied().unwrap_or(0.0);
        check(density(vec![0.0], vec![s0]), observed);
    }
    for s0 in 0..2 {
        for b in 0..bins {
            let t1 = (b as f64 + 0.5) * width;
            for s1 in 0..2 {
                let observed = counts.get(&(1, s0, b, s1, 0, 0)).copied().unwrap_or(0.0);
                let prob = density(vec![0.0, t1], vec![s0, s1]) * width;
                check(prob, observed);
            }
        }
    }
    for s0 in 0..2 {
        for b1 in 0..bins {
            for b2 in b1..bins {
                // cell volume: ordered pair within the box
                let volume = if b1 == b2 { width * width / 2.0 } else { width * width };
                let (t1, t2) = if b1 == b2 {
                    ((b1 as f64 + 1.0 / 3.0) * width, (b2 as f64 + 2.0 / 3.0) * width)
                } else {
                    ((b1 as f64 + 0.5) * width, (b2 as f64 + 0.5) * width)
                };
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let observed =
                            counts.get(&(2, s0, b1, s1, b2, s2)).copied().unwrap_or(0.0);
                        let prob = density(vec![0.0, t1, t2], vec![s0, s1, s2]) * volume;
                        check(prob, observed);
                    }
                }
            }
        }
    }

    assert!(cells > 400, "cells={cells}");
    let frac = beyond3 as f64 / cells as f64;
    assert!(frac <= 0.01, "{beyond3} of {cells} cells beyond 3 sigma");
    assert!(worst_z < 6.0, "worst z = {worst_z}");
}

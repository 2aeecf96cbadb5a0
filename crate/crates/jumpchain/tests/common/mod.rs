//! Shared generators for the integration suites.

use jumpchain::ffbs::SkeletonHmm;
use jumpchain::mjp::{IntensityModel, StateSpace, Trajectory};
use ndarray::{array, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The standard two-state test problem: symmetric unit rates, R = 2 on
/// [0, 1], uniform initial law.
pub fn two_state_model() -> IntensityModel {
    IntensityModel::homogeneous(
        StateSpace::of_size(2),
        vec![0.5, 0.5],
        0.0,
        1.0,
        array![[0.0, 1.0], [1.0, 0.0]],
        Some(vec![2.0, 2.0]),
    )
    .unwrap()
}

pub fn symmetric_q() -> Array2<f64> {
    array![[0.0, 1.0], [1.0, 0.0]]
}

/// Random skeleton chain with strictly positive transitions and bounded
/// potentials.
pub fn random_hmm(rng: &mut ChaCha8Rng, n_states: usize, steps: usize) -> SkeletonHmm {
    let mut initial: Vec<f64> = (0..n_states).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|p| *p /= total);
    let trans: Vec<Array2<f64>> = (0..steps)
        .map(|_| {
            let mut p = Array2::zeros((n_states, n_states));
            for s in 0..n_states {
                let mut row: Vec<f64> = (0..n_states).map(|_| 0.05 + rng.random::<f64>()).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                for (s2, v) in row.into_iter().enumerate() {
                    p[[s, s2]] = v;
                }
            }
            p
        })
        .collect();
    let log_pot: Vec<Vec<f64>> = (0..=steps)
        .map(|_| (0..n_states).map(|_| 3.0 * rng.random::<f64>() - 2.0).collect())
        .collect();
    SkeletonHmm::new(initial, trans, log_pot).unwrap()
}

/// Trajectory with the requested jump count (including the initial index):
/// equispaced jumps cycling through the states.
pub fn alternating_trajectory(model: &IntensityModel, jump_count: usize) -> Trajectory {
    let span = model.tmax() - model.tmin();
    let jumps: Vec<f64> = (1..jump_count)
        .map(|i| model.tmin() + span * i as f64 / jump_count as f64)
        .collect();
    let states: Vec<usize> = (0..jump_count).map(|i| i % model.n_states()).collect();
    Trajectory::new(model.tmin(), model.tmax(), jumps, states).unwrap()
}

/// Sampling floor for the total-variation distance between an empirical
/// distribution over `support` cells and its target, estimated from `n`
/// draws: `E TV <= 0.5 * sqrt(2 * support / (pi * n))`.
pub fn tv_sampling_floor(support: usize, n: usize) -> f64 {
    0.5 * (2.0 * support as f64 / (std::f64::consts::PI * n as f64)).sqrt()
}

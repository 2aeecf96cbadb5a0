//! State-dependent thinning: prior simulation of the redundant
//! (times, skeleton) representation of an MJP, the per-event transition
//! matrix built from the intensity ratio, and the exact joint log density of
//! a redundant pair.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{sample_categorical, LOG_ZERO};
use crate::mjp::{ln_or_zero, EventSequence, IntensityModel, TIE_REL_TOL};

/// Per-event transition matrix: off-diagonal `Q(t;s,s')/R(t;s)`, diagonal
/// `1 - Q(t;s)/R(t;s)`. Rows sum to one; the diagonal carries the thinning
/// margin.
#[derive(Debug, Clone)]
pub struct ThinningMatrix {
    pub time: f64,
    pub probs: Array2<f64>,
}

impl ThinningMatrix {
    pub fn row(&self, s: usize) -> Vec<f64> {
        self.probs.row(s).to_vec()
    }
}

/// Builds the thinning matrix of a validated model at time `t`.
pub fn thinning_matrix(model: &IntensityModel, t: f64) -> ThinningMatrix {
    ThinningMatrix {
        time: t,
        probs: thinning_probs(model, t),
    }
}

pub(crate) fn thinning_probs(model: &IntensityModel, t: f64) -> Array2<f64> {
    let n = model.n_states();
    let mut p = Array2::zeros((n, n));
    for s in 0..n {
        let r = model.r_rate(t, s);
        let mut off = 0.0;
        for s2 in 0..n {
            if s2 != s {
                let v = if r > 0.0 { model.q_rate(t, s, s2) / r } else { 0.0 };
                p[[s, s2]] = v;
                off += v;
            }
        }
        p[[s, s]] = (1.0 - off).max(0.0);
    }
    p
}

/// Simulates the redundant pair by state-dependent thinning: draw the initial
/// state from `nu`, then alternate a first-arrival time of the instrumental
/// process with a draw from the thinning matrix until the window is
/// exhausted. Compacting the result yields an exact draw from the MJP prior.
pub fn sample_prior_path<R: Rng + ?Sized>(
    model: &IntensityModel,
    rng: &mut R,
) -> Result<EventSequence> {
    let tie = TIE_REL_TOL * (model.tmax() - model.tmin());
    let mut times = vec![model.tmin()];
    let s0 = sample_categorical(model.nu(), rng)
        .ok_or_else(|| Error::invalid("initial distribution has zero mass"))?;
    let mut states = vec![s0];
    loop {
        let current = *states.last().unwrap();
        let rate = model.r_rate_fn(current);
        let u = *times.last().unwrap();
        match crate::events::sample_holding_time(u, &rate, model.tmax(), rng)? {
            None => break,
            Some(w) => {
                // Events landing degenerately close to the previous event or
                // to tmax have probability zero; resample by rejection.
                if w - u < tie || model.tmax() - w < tie {
                    continue;
                }
                let p = thinning_probs(model, w);
                let row: Vec<f64> = (0..model.n_states()).map(|s2| p[[current, s2]]).collect();
                let next = sample_categorical(&row, rng)
                    .ok_or_else(|| Error::invalid("thinning row has zero mass"))?;
                times.push(w);
                states.push(next);
            }
        }
    }
    EventSequence::new(model.tmin(), model.tmax(), times, states)
}

/// Exact log density of a redundant pair under the thinning construction:
/// initial mass, a thinning factor and an arrival factor per event, and the
/// final survival term.
pub fn joint_log_density(model: &IntensityModel, ev: &EventSequence) -> f64 {
    let times = ev.times();
    let states = ev.states();
    let mut ld = ln_or_zero(model.nu()[states[0]]);
    for i in 1..times.len() {
        let t = times[i];
        let prev = states[i - 1];
        let p = thinning_probs(model, t);
        let trans = p[[prev, states[i]]];
        if trans <= 0.0 {
            return LOG_ZERO;
        }
        ld += trans.ln();
        ld += ln_or_zero(model.r_rate(t, prev));
        ld -= model.integrate_r(times[i - 1], t, prev);
    }
    let last = *states.last().unwrap();
    ld -= model.integrate_r(*times.last().unwrap(), model.tmax(), last);
    ld
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::StateSpace;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn symmetric_model(r: f64) -> IntensityModel {
        IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![0.5, 0.5],
            0.0,
            1.0,
            array![[0.0, 1.0], [1.0, 0.0]],
            Some(vec![r, r]),
        )
        .unwrap()
    }

    #[test]
    fn thinning_matrix_symmetric_half() {
        let p = thinning_matrix(&symmetric_model(2.0), 0.3).probs;
        for s in 0..2 {
            for s2 in 0..2 {
                assert!((p[[s, s2]] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn thinning_matrix_state_dependent_r() {
        // Q(0,1)=1, Q(1,0)=2, R = 2Q per state: every row is (1/2, 1/2).
        let m = IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![0.5, 0.5],
            0.0,
            1.0,
            array![[0.0, 1.0], [2.0, 0.0]],
            Some(vec![2.0, 4.0]),
        )
        .unwrap();
        let p = thinning_matrix(&m, 0.0).probs;
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((p[[0, 1]] - 0.5).abs() < 1e-15);
        assert!((p[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((p[[1, 1]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn thinning_matrix_quarter() {
        let p = thinning_matrix(&symmetric_model(4.0), 0.0).probs;
        assert!((p[[0, 0]] - 0.75).abs() < 1e-15);
        assert!((p[[0, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn thinning_rows_sum_to_one_with_margin() {
        let m = symmetric_model(2.0);
        for &t in &[0.0, 0.25, 0.99] {
            let p = thinning_matrix(&m, t).probs;
            for s in 0..2 {
                let row_sum: f64 = (0..2).map(|s2| p[[s, s2]]).sum();
                assert!((row_sum - 1.0).abs() < 1e-12);
                assert!(p[[s, s]] >= 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn point_mass_initial_state() {
        let m = IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![1.0, 0.0],
            0.0,
            1.0,
            array![[0.0, 1.0], [1.0, 0.0]],
            Some(vec![2.0, 2.0]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let ev = sample_prior_path(&m, &mut rng).unwrap();
            assert_eq!(ev.states()[0], 0);
        }
    }

    #[test]
    fn joint_log_density_survival_only() {
        let m = IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![1.0, 0.0],
            0.0,
            1.0,
            array![[0.0, 1.0], [1.0, 0.0]],
            Some(vec![2.0, 2.0]),
        )
        .unwrap();
        let ev = EventSequence::new(0.0, 1.0, vec![0.0], vec![0]).unwrap();
        assert!((joint_log_density(&m, &ev) - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn joint_log_density_one_virtual_event() {
        let m = IntensityModel::homogeneous(
            StateSpace::of_size(2),
            vec![1.0, 0.0],
            0.0,
            1.0,
            array![[0.0, 1.0], [1.0, 0.0]],
            Some(vec![2.0, 2.0]),
        )
        .unwrap();
        let ev = EventSequence::new(0.0, 1.0, vec![0.0, 0.5], vec![0, 0]).unwrap();
        // ln P(a,a) + ln R - \int_0^.5 R - \int_.5^1 R = ln .5 + ln 2 - 1 - 1
        assert!((joint_log_density(&m, &ev) - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn prior_event_count_matches_instrumental_mass() {
        // |T| - 1 is Poisson(R * window) for symmetric R; mean events incl.
        // T_0 is 1 + 2.
        let m = symmetric_model(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reps = 100_000;
        let mut total = 0usize;
        for _ in 0..reps {
            total += sample_prior_path(&m, &mut rng).unwrap().len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 3.0).abs() < 0.02, "mean={mean}");
    }

    #[test]
    fn joint_log_density_finite_on_prior_draws() {
        let m = symmetric_model(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let ev = sample_prior_path(&m, &mut rng).unwrap();
            assert!(joint_log_density(&m, &ev).is_finite());
        }
    }
}

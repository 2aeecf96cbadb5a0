//! Posterior sampling for hidden Markov jump processes on finite state
//! spaces, by alternating virtual-jump resampling with exact skeleton
//! redraws, plus the random-scan Gibbs extension for continuous-time
//! Bayesian networks.
//!
//! The crate is organized around:
//!
//! - [`mjp`]: trajectories, intensity models, evidence, and validation of
//!   the ergodicity preconditions;
//! - [`events`]: exact samplers for piecewise-constant-rate event times;
//! - [`thinning`]: prior simulation of the redundant (times, skeleton)
//!   representation and its joint density;
//! - [`ffbs`]: forward filtering / backward sampling of the skeleton chain
//!   with multiplicative potentials;
//! - [`raoteh`]: the trajectory kernel and chain drivers;
//! - [`ctbn`]: network models, path densities, full conditionals, and the
//!   random-scan Gibbs sampler;
//! - [`oracle`]: brute-force ground truth for small instances;
//! - [`diagnostics`]: drift estimation, joint-distribution invariance
//!   testing, total-variation and effective-sample-size utilities;
//! - [`io`]: JSON file schemas and trace serialization.

pub mod ctbn;
pub mod diagnostics;
pub mod error;
pub mod events;
pub mod ffbs;
pub mod io;
pub mod math;
pub mod mjp;
pub mod oracle;
pub mod raoteh;
pub mod thinning;

pub use error::{Error, Result};
pub use mjp::{Evidence, EventSequence, IntensityModel, StateSpace, Trajectory};

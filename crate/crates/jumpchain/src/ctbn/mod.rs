//! Continuous-time Bayesian networks: factored multivariate MJPs whose
//! per-node intensities depend on the parents' current states, with exact
//! path densities via per-configuration sufficient statistics and a
//! random-scan Gibbs sampler that redraws one node trajectory per scan from
//! its full conditional.

mod gibbs;
mod model;
mod path;

pub use gibbs::{
    gibbs_step, node_full_conditional_hmm, resample_virtual_node, run_ctbn_chain,
    run_ctbn_chains, sample_joint_initial, sample_node_given_parents, sample_prior, update_node,
    CtbnChainConfig, CtbnInit, CtbnSweepRecord, CtbnTrace,
};
pub use model::{CtbnModel, CtbnNode, CtbnNodeSpec, CtbnValidationReport, InitialLaw};
pub use path::{node_log_density, path_log_density, sufficient_stats, CtbnPath, SufficientStats};

//! Adaptive control of finite average-reward Markov decision processes with
//! unknown transition probabilities.
//!
//! * [`mdp`]: the model, the complete-information solver and loss functions.
//! * [`klopt`]: KL divergence and the two KL-constrained simplex programs.
//! * [`estimation`]: count tables, smoothed estimators and good action sets.
//! * [`policies`]: the UCB, DMED and posterior-sampling decision rules.
//! * [`simulator`]: episodes, regret accounting and replication aggregates.
//! * [`oracle`]: brute-force reference solvers for testing.

pub mod error;
pub mod estimation;
pub mod klopt;
pub mod mdp;
pub mod oracle;
pub mod policies;
pub mod rng;
pub mod simulator;

pub use error::{MdpError, Result};
pub use estimation::CountTables;
pub use klopt::{kl_divergence, min_kl_above_threshold, ucb_index, ProbVector, UcbIndex};
pub use mdp::{
    brute_force_gain, delta, l_value, optimal_action_set, solve_optimality, ActionSets, Analysis,
    DeterministicPolicy, GainBias, MdpModel,
};
pub use policies::{Controller, PolicyKind};
pub use rng::RngStream;
pub use simulator::{
    inject_rigged_prior, run_episode, run_experiment, run_replications, step_chain,
    AggregateCurves, Episode, RegretSeries, SimConfig,
};

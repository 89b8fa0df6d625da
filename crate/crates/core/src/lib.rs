//! Solvers for finite discounted Markov decision processes.
//!
//! The crate is organised around one idea: an MDP's rewards can be rewritten
//! state by state without changing any action's advantage with respect to any
//! policy. Pushing the rewards towards the form where every optimal action has
//! reward zero solves the MDP without ever storing state values.
//!
//! * [`mdp`] : the MDP representation, Bellman machinery and exact evaluation.
//! * [`geometry`] : action/policy vectors, the reward transformations and
//!   normalization.
//! * [`exact`] : value iteration, policy iteration and exact reward balancing.
//! * [`balance`] : safe reward balancing, its bounds and action filtering.
//! * [`stochastic`] : generative-model solvers, including the federated variant
//!   and a synchronous Q-learning baseline.
//! * [`generators`] : seeded benchmark MDP families.
//! * [`experiment`] : the comparison experiments and their CSV/SVG output.

pub mod balance;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod generators;
pub mod geometry;
pub mod io;
pub mod mdp;
pub mod plot;
pub mod rng;
pub mod stochastic;
pub mod trace;
mod vectors;

pub use error::{Error, Result};
pub use mdp::{Action, Mdp, Policy, ValidationReport, Violation};
pub use trace::{IterationRecord, SolverTrace};
pub use vectors::{DeltaVector, ValueVector};

/// Tolerance used for exact-identity checks throughout the crate.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Tolerance on the sum of an action's transition probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;

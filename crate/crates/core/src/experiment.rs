//! Comparison experiments: value iteration against reward balancing on known
//! MDPs, and Q-learning against stochastic reward balancing under a generative
//! model. Repetitions run in parallel with per-rep seeds and are aggregated in
//! rep order, so output never depends on scheduling.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{min_of_state_max, shift_rewards_nonpositive, RewardBalancer};
use crate::error::{Error, Result};
use crate::exact::{solve_optimal, ValueIterator};
use crate::generators::{cycle_mdp, grid_world, random_mdp, MixParams};
use crate::mdp::{evaluate_policy, Mdp, Policy};
use crate::rng::derive_seed;
use crate::stochastic::{
    default_learning_rate, optimal_action_gap, stochastic_rbs, synchronous_q_learning, GenerativeModel, Sampling,
    Stopping,
};
use crate::vectors::ValueVector;

/// Target suboptimality of the known-MDP experiments.
pub const EXPERIMENT_EPSILON: f64 = 0.1;

/// Iteration cap for a single known-MDP run.
pub const ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Random,
    Grid,
    Cycle,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Random, Family::Grid, Family::Cycle];

    pub fn name(self) -> &'static str {
        match self {
            Family::Random => "random",
            Family::Grid => "grid",
            Family::Cycle => "cycle",
        }
    }

    fn lane(self) -> u64 {
        self as u64
    }
}

/// Grid shape with `rows * cols == n` and the sides as close as possible.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    (rows, n / rows)
}

/// A benchmark MDP with roughly `n` states.
pub fn build(family: Family, n: usize, mix: MixParams, gamma: f64, seed: u64) -> Result<Mdp> {
    match family {
        Family::Random => random_mdp(n, seed, mix, gamma),
        Family::Grid => {
            let (r, c) = grid_shape(n);
            grid_world(r, c, mix, gamma, seed)
        }
        Family::Cycle => cycle_mdp(n, mix, gamma, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnownSolver {
    Vi,
    Rbs,
}

impl KnownSolver {
    pub fn name(self) -> &'static str {
        match self {
            KnownSolver::Vi => "vi",
            KnownSolver::Rbs => "rbs",
        }
    }
}

/// Checks policies against the optimal values, caching by policy.
pub struct EpsilonOracle<'a> {
    mdp: &'a Mdp,
    v_star: ValueVector,
    epsilon: f64,
    cache: HashMap<Policy, bool>,
}

impl<'a> EpsilonOracle<'a> {
    pub fn new(mdp: &'a Mdp, epsilon: f64) -> Result<Self> {
        let (_, v_star) = solve_optimal(mdp)?;
        Ok(Self { mdp, v_star, epsilon, cache: HashMap::new() })
    }

    pub fn is_optimal(&mut self, policy: &Policy) -> Result<bool> {
        if let Some(&hit) = self.cache.get(policy) {
            return Ok(hit);
        }
        let v = evaluate_policy(self.mdp, policy)?;
        let ok = self.v_star.max_abs_diff(&v) <= self.epsilon;
        self.cache.insert(policy.clone(), ok);
        Ok(ok)
    }
}

/// How a known-MDP run is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// Iterations until the solver's own stopping test fires: the largest
    /// Bellman residual over `1 - gamma` drops below epsilon. For reward
    /// balancing the residual is `|R^min_t|`; value iteration runs from
    /// `V = 0` on the same max-shifted MDP, so without self-loops both counts
    /// coincide.
    Stopping,
    /// First iteration whose current policy is epsilon-optimal according to a
    /// policy-iteration oracle.
    FirstOptimal,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "stop" => Ok(Metric::Stopping),
            "oracle" => Ok(Metric::FirstOptimal),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}; expected stop or oracle"))),
        }
    }
}

/// Iterations until the solver's stopping test fires (see [`Metric::Stopping`]).
pub fn iterations_to_stop(mdp: &Mdp, solver: KnownSolver, epsilon: f64, cap: usize) -> Result<usize> {
    let scale = 1.0 - mdp.gamma();
    match solver {
        KnownSolver::Vi => {
            let (shifted, _) = shift_rewards_nonpositive(mdp);
            let mut vi = ValueIterator::new(&shifted, ValueVector::zeros(mdp.n()))?;
            loop {
                let step = vi.step();
                if step.change.inf_norm() / scale < epsilon {
                    return Ok(vi.iteration() - 1);
                }
                if vi.iteration() > cap {
                    return Err(cap_error(solver, cap));
                }
            }
        }
        KnownSolver::Rbs => {
            let mut rb = RewardBalancer::new(mdp);
            while rb.r_min().abs() / scale >= epsilon {
                if rb.iteration() >= cap {
                    return Err(cap_error(solver, cap));
                }
                rb.step();
            }
            Ok(rb.iteration())
        }
    }
}

pub fn iterations(mdp: &Mdp, solver: KnownSolver, metric: Metric, epsilon: f64, cap: usize) -> Result<usize> {
    match metric {
        Metric::Stopping => iterations_to_stop(mdp, solver, epsilon, cap),
        Metric::FirstOptimal => iterations_to_epsilon(mdp, solver, epsilon, cap),
    }
}

/// First iteration `t` at which the solver's current policy is
/// `epsilon`-optimal. Value iteration starts from `V = 0` and uses the greedy
/// policy; reward balancing uses the argmax-reward policy. At `t = 0` both are
/// the argmax of the original rewards.
pub fn iterations_to_epsilon(mdp: &Mdp, solver: KnownSolver, epsilon: f64, cap: usize) -> Result<usize> {
    let mut oracle = EpsilonOracle::new(mdp, epsilon)?;
    match solver {
        KnownSolver::Vi => {
            let mut vi = ValueIterator::new(mdp, ValueVector::zeros(mdp.n()))?;
            let mut policy = vi.greedy();
            while !oracle.is_optimal(&policy)? {
                if vi.iteration() >= cap {
                    return Err(cap_error(solver, cap));
                }
                vi.step();
                policy = vi.greedy();
            }
            Ok(vi.iteration())
        }
        KnownSolver::Rbs => {
            let mut rb = RewardBalancer::new(mdp);
            while !oracle.is_optimal(&rb.policy())? {
                if rb.iteration() >= cap {
                    return Err(cap_error(solver, cap));
                }
                rb.step();
            }
            Ok(rb.iteration())
        }
    }
}

fn cap_error(solver: KnownSolver, cap: usize) -> Error {
    Error::InvalidParameter(format!("{} was not epsilon-optimal within {cap} iterations", solver.name()))
}

/// One aggregated point of an experiment curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub x: f64,
    pub algo: String,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from("x,algo,mean,std,reps\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.x, r.algo, r.mean, r.std, r.reps);
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnownExperiment {
    /// Execution probability `x`, the rest on self-loops.
    ExecProb,
    /// Random probability `x`, the rest on self-loops.
    RandomProb,
    /// Discount factor sweep at execution = random = 0.5.
    GammaSweep,
    /// State count sweep at execution = random = 0.5.
    SizeSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StochExperiment {
    /// Random probability 1, gamma 0.95.
    Random,
    /// Random 0.75, self-loop 0.25, gamma 0.9.
    Grid,
    /// Execution 0.5, random 0.25, self-loop 0.25, gamma 0.9.
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    Known(KnownExperiment),
    Stoch(StochExperiment),
}

impl Experiment {
    pub const NAMES: [&'static str; 7] = [
        "exec-prob",
        "random-prob",
        "gamma-sweep",
        "size-sweep",
        "stoch-random",
        "stoch-grid",
        "stoch-ring",
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "exec-prob" => Experiment::Known(KnownExperiment::ExecProb),
            "random-prob" => Experiment::Known(KnownExperiment::RandomProb),
            "gamma-sweep" => Experiment::Known(KnownExperiment::GammaSweep),
            "size-sweep" => Experiment::Known(KnownExperiment::SizeSweep),
            "stoch-random" => Experiment::Stoch(StochExperiment::Random),
            "stoch-grid" => Experiment::Stoch(StochExperiment::Grid),
            "stoch-ring" => Experiment::Stoch(StochExperiment::Ring),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown experiment {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn x_label(&self) -> &'static str {
        match self {
            Experiment::Known(KnownExperiment::ExecProb) => "execution probability",
            Experiment::Known(KnownExperiment::RandomProb) => "random probability",
            Experiment::Known(KnownExperiment::GammaSweep) => "gamma",
            Experiment::Known(KnownExperiment::SizeSweep) => "number of states",
            Experiment::Stoch(_) => "samples per action per round",
        }
    }

    pub fn y_label(&self) -> &'static str {
        match self {
            Experiment::Known(_) => "iterations to 0.1-optimal policy",
            Experiment::Stoch(_) => "optimal action reward gap",
        }
    }
}

/// One known-MDP sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownPoint {
    pub x: f64,
    pub n: usize,
    pub mix: MixParams,
    pub gamma: f64,
}

pub const SWEEP_PROBS: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];
pub const SWEEP_GAMMAS: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 0.98];
pub const SWEEP_SIZES: [usize; 4] = [100, 196, 289, 400];

pub fn known_points(exp: KnownExperiment) -> Vec<KnownPoint> {
    let half = MixParams { exec: 0.5, random: 0.5, self_loop: 0.0 };
    match exp {
        KnownExperiment::ExecProb => SWEEP_PROBS
            .iter()
            .map(|&x| KnownPoint { x, n: 100, mix: MixParams { exec: x, random: 0.0, self_loop: 1.0 - x }, gamma: 0.95 })
            .collect(),
        KnownExperiment::RandomProb => SWEEP_PROBS
            .iter()
            .map(|&x| KnownPoint { x, n: 100, mix: MixParams { exec: 0.0, random: x, self_loop: 1.0 - x }, gamma: 0.95 })
            .collect(),
        KnownExperiment::GammaSweep => SWEEP_GAMMAS
            .iter()
            .map(|&g| KnownPoint { x: g, n: 100, mix: half, gamma: g })
            .collect(),
        KnownExperiment::SizeSweep => SWEEP_SIZES
            .iter()
            .map(|&n| KnownPoint { x: n as f64, n, mix: half, gamma: 0.95 })
            .collect(),
    }
}

/// Seed of repetition `rep` for a family. Shared across sweep points so each
/// curve follows the same instances.
pub fn rep_seed(master: u64, family: Family, rep: usize) -> u64 {
    derive_seed(master, family.lane(), rep as u64)
}

/// Iteration counts per rep for one point, in rep order.
pub fn known_counts(
    family: Family,
    point: &KnownPoint,
    solver: KnownSolver,
    metric: Metric,
    reps: usize,
    master: u64,
) -> Result<Vec<f64>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mdp = build(family, point.n, point.mix, point.gamma, rep_seed(master, family, rep))?;
            iterations(&mdp, solver, metric, EXPERIMENT_EPSILON, ITERATION_CAP).map(|t| t as f64)
        })
        .collect()
}

/// Runs a known-MDP sweep over `families`; one row per (point, solver,
/// family), algo named `<solver>-<family>`.
pub fn run_known(exp: KnownExperiment, families: &[Family], metric: Metric, reps: usize, master: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for point in known_points(exp) {
        for &family in families {
            for solver in [KnownSolver::Vi, KnownSolver::Rbs] {
                let counts = known_counts(family, &point, solver, metric, reps, master)?;
                let (mean, std) = mean_std(&counts);
                rows.push(Row { x: point.x, algo: format!("{}-{}", solver.name(), family.name()), mean, std, reps });
            }
        }
    }
    Ok(rows)
}

/// Parameters of a stochastic setup.
#[derive(Debug, Clone, PartialEq)]
pub struct StochSetup {
    pub n: usize,
    pub mix: MixParams,
    pub gamma: f64,
    pub ks: Vec<u64>,
}

pub fn stoch_setup(exp: StochExperiment, full_scale: bool) -> StochSetup {
    let (full_n, mix, gamma) = match exp {
        StochExperiment::Random => (100, MixParams { exec: 0.0, random: 1.0, self_loop: 0.0 }, 0.95),
        StochExperiment::Grid => (200, MixParams { exec: 0.0, random: 0.75, self_loop: 0.25 }, 0.9),
        StochExperiment::Ring => (400, MixParams { exec: 0.5, random: 0.25, self_loop: 0.25 }, 0.9),
    };
    if full_scale {
        StochSetup { n: full_n, mix, gamma, ks: vec![10, 100, 1_000, 10_000, 100_000, 1_000_000] }
    } else {
        StochSetup { n: 20, mix, gamma, ks: vec![10, 100, 1_000, 10_000] }
    }
}

/// Rounds used for a stochastic comparison:
/// `log(r_max / (epsilon (1 - gamma))) / (1 - gamma)`, at least one.
pub fn stoch_rounds(r_max: f64, epsilon: f64, gamma: f64) -> usize {
    if r_max <= 0.0 {
        return 1;
    }
    let t = (r_max / (epsilon * (1.0 - gamma))).ln() / (1.0 - gamma);
    (t.ceil() as usize).max(1)
}

/// `-min_s max_a r` after shifting the largest reward to zero.
pub fn shifted_r_max(mdp: &Mdp) -> f64 {
    mdp.max_reward() - min_of_state_max(mdp, &mdp.rewards(), None)
}

/// Final optimal-action gaps of stochastic RB-S and Q-learning on one
/// instance, both fed the same samples.
pub fn stoch_pair(mdp: Mdp, k: u64, seed: u64) -> Result<(f64, f64)> {
    let rounds = stoch_rounds(shifted_r_max(&mdp), EXPERIMENT_EPSILON, mdp.gamma());
    let (optimal, _) = solve_optimal(&mdp)?;
    let gamma = mdp.gamma();
    let model = GenerativeModel::new(mdp, seed);
    let sampling = Sampling::Generative { workers: 1, k };
    let rbs = stochastic_rbs(&model, sampling, Stopping::Fixed(rounds), false)?;
    let q = synchronous_q_learning(&model, sampling, rounds, default_learning_rate(gamma), false)?;
    Ok((
        optimal_action_gap(&model.mdp, &optimal, &rbs.policy),
        optimal_action_gap(&model.mdp, &optimal, &q.policy),
    ))
}

/// Runs a stochastic setup over `families`; rows named `rbs-<family>` and
/// `q-<family>` with `x = k`.
pub fn run_stoch(exp: StochExperiment, families: &[Family], reps: usize, master: u64, full_scale: bool) -> Result<Vec<Row>> {
    let setup = stoch_setup(exp, full_scale);
    let mut rows = Vec::new();
    for &k in &setup.ks {
        for &family in families {
            let pairs: Vec<(f64, f64)> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = rep_seed(master, family, rep);
                    let mdp = build(family, setup.n, setup.mix, setup.gamma, seed)?;
                    stoch_pair(mdp, k, derive_seed(seed, 0, k))
                })
                .collect::<Result<_>>()?;
            for (name, pick) in [("rbs", 0), ("q", 1)] {
                let xs: Vec<f64> = pairs.iter().map(|p| if pick == 0 { p.0 } else { p.1 }).collect();
                let (mean, std) = mean_std(&xs);
                rows.push(Row { x: k as f64, algo: format!("{name}-{}", family.name()), mean, std, reps });
            }
        }
    }
    Ok(rows)
}

/// Runs any experiment. `metric` only affects the known-MDP sweeps.
pub fn run(
    exp: Experiment,
    families: &[Family],
    metric: Metric,
    reps: usize,
    master: u64,
    full_scale: bool,
) -> Result<Vec<Row>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    match exp {
        Experiment::Known(k) => run_known(k, families, metric, reps, master),
        Experiment::Stoch(s) => run_stoch(s, families, reps, master, full_scale),
    }
}

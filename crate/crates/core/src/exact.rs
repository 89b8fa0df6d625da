//! Known-model baselines (value iteration, policy iteration) and exact reward
//! balancing, which walks the same policy sequence as policy iteration.

use crate::error::{Error, Result};
use crate::geometry::apply_delta_to_rewards;
use crate::mdp::{
    advantage_with_reward, bellman_optimality, evaluate_with_rewards, greedy_policy, Mdp, Policy,
};
use crate::trace::{IterationRecord, SolverTrace};
use crate::vectors::{DeltaVector, ValueVector};
use crate::IDENTITY_TOL;

/// An action replaces the current choice only if it beats it by more than this.
pub const IMPROVEMENT_TOL: f64 = 1e-10;

const PI_MAX_ITERS: usize = 100_000;

/// Per-state argmax of immediate reward; the default starting policy.
pub fn argmax_reward_policy(mdp: &Mdp) -> Policy {
    Policy::argmax_reward(mdp, &mdp.rewards())
}

/// Policy improvement shared by PI and exact reward balancing: switch to the
/// best-scoring action (lowest index on ties) only on a strict improvement.
fn improve(mdp: &Mdp, current: &Policy, score: impl Fn(usize) -> f64) -> Policy {
    let best = Policy::argmax_by(mdp, &score);
    let choice = (0..mdp.n())
        .map(|s| {
            let cur = current.action(s);
            let cand = best.action(s);
            if score(cand) > score(cur) + IMPROVEMENT_TOL {
                cand
            } else {
                cur
            }
        })
        .collect();
    Policy::new(choice)
}

fn min_state_max(mdp: &Mdp, score: impl Fn(usize) -> f64) -> f64 {
    (0..mdp.n())
        .map(|s| {
            mdp.state_actions(s)
                .iter()
                .map(|&a| score(a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub policy: Policy,
    pub values: ValueVector,
    pub trace: SolverTrace,
}

/// Stopping threshold on `||V_{t+1} - V_t||_inf` that makes the greedy policy
/// `epsilon`-optimal.
pub fn vi_stopping_threshold(epsilon: f64, gamma: f64) -> f64 {
    epsilon * (1.0 - gamma) / (2.0 * gamma)
}

/// Steps `V_{t+1} = max_a [r^a + gamma P^a V_t]` one backup at a time.
#[derive(Debug, Clone)]
pub struct ValueIterator<'a> {
    mdp: &'a Mdp,
    values: ValueVector,
    iter: usize,
}

/// Outcome of one backup.
#[derive(Debug, Clone)]
pub struct ValueStep {
    /// `V_{t+1} - V_t`.
    pub change: DeltaVector,
    /// Policy attaining the maximum in the backup, i.e. greedy w.r.t. `V_t`.
    pub policy: Policy,
}

impl<'a> ValueIterator<'a> {
    pub fn new(mdp: &'a Mdp, v0: ValueVector) -> Result<Self> {
        mdp.check_len(&v0)?;
        Ok(Self {
            mdp,
            values: v0,
            iter: 0,
        })
    }

    pub fn values(&self) -> &ValueVector {
        &self.values
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// Greedy policy against the current values.
    pub fn greedy(&self) -> Policy {
        greedy_policy(self.mdp, &self.values).expect("length checked at construction")
    }

    pub fn step(&mut self) -> ValueStep {
        let (next, policy) = bellman_optimality(self.mdp, &self.values);
        let change: Vec<f64> = next.iter().zip(self.values.iter()).map(|(a, b)| a - b).collect();
        self.values = next;
        self.iter += 1;
        ValueStep {
            change: change.into(),
            policy,
        }
    }
}

/// Value iteration from `v0`, stopping once successive iterates are within
/// `epsilon (1 - gamma) / (2 gamma)`. The trace's `converged` flag is false if
/// `max_iters` ran out first.
pub fn value_iteration(
    mdp: &Mdp,
    v0: &[f64],
    epsilon: f64,
    max_iters: usize,
) -> Result<ValueIterationOutcome> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let threshold = vi_stopping_threshold(epsilon, mdp.gamma());
    let mut vi = ValueIterator::new(mdp, v0.to_vec().into())?;
    let mut trace = SolverTrace::new("vi", epsilon);
    while vi.iteration() < max_iters {
        let step = vi.step();
        let diff = step.change.inf_norm();
        let r_min = step.change.iter().copied().fold(f64::INFINITY, f64::min);
        trace.push(IterationRecord::new(step.change, r_min, step.policy));
        if diff <= threshold {
            trace.converged = true;
            break;
        }
    }
    Ok(ValueIterationOutcome {
        policy: vi.greedy(),
        values: vi.values,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct PolicyIterationOutcome {
    pub policy: Policy,
    pub values: ValueVector,
    pub trace: SolverTrace,
}

/// Howard's policy iteration. One trace record per evaluated policy; `delta`
/// holds the value change from the previous policy and `r_min` the smallest
/// per-state best advantage against the evaluated policy.
pub fn policy_iteration(mdp: &Mdp, pi0: &Policy) -> Result<PolicyIterationOutcome> {
    pi0.validate(mdp)?;
    let g = mdp.gamma();
    let rewards = mdp.rewards();
    let mut trace = SolverTrace::new("pi", IDENTITY_TOL);
    let mut policy = pi0.clone();
    let mut prev: Option<ValueVector> = None;
    loop {
        let v = evaluate_with_rewards(mdp, &rewards, &policy)?;
        let adv = |a: usize| {
            let act = &mdp.actions()[a];
            advantage_with_reward(g, act, act.reward, &v)
        };
        let delta: Vec<f64> = match &prev {
            Some(p) => v.iter().zip(p.iter()).map(|(a, b)| a - b).collect(),
            None => v.to_vec(),
        };
        trace.push(IterationRecord::new(delta.into(), min_state_max(mdp, adv), policy.clone()));
        let next = improve(mdp, &policy, adv);
        if next == policy {
            trace.converged = true;
            return Ok(PolicyIterationOutcome {
                policy,
                values: v,
                trace,
            });
        }
        if trace.len() >= PI_MAX_ITERS {
            return Ok(PolicyIterationOutcome {
                policy,
                values: v,
                trace,
            });
        }
        policy = next;
        prev = Some(v);
    }
}

/// Optimal policy and values by policy iteration from the argmax-reward start.
pub fn solve_optimal(mdp: &Mdp) -> Result<(Policy, ValueVector)> {
    let out = policy_iteration(mdp, &argmax_reward_policy(mdp))?;
    Ok((out.policy, out.values))
}

#[derive(Debug, Clone)]
pub struct ExactBalancingOutcome {
    pub policy: Policy,
    /// Sum of all applied increments; equals `-V*` of the shifted MDP.
    pub cumulative: DeltaVector,
    pub trace: SolverTrace,
}

/// Exact reward balancing. Picks the per-state argmax-reward policy, applies
/// the increment that zeroes that policy's values, and repeats until the
/// chosen rewards are all zero. One trace record per policy that received an
/// increment; `r_min` is read after the increment.
pub fn exact_reward_balancing(mdp: &Mdp) -> Result<ExactBalancingOutcome> {
    let shift = mdp.max_reward();
    let mut rewards: Vec<f64> = mdp.rewards().iter().map(|r| r - shift).collect();
    let mut cumulative = vec![0.0; mdp.n()];
    let mut trace = SolverTrace::new("erb", IDENTITY_TOL);
    let mut policy = Policy::argmax_reward(mdp, &rewards);
    loop {
        let balanced = policy
            .choice()
            .iter()
            .all(|&a| rewards[a].abs() <= IDENTITY_TOL);
        if balanced {
            if trace.is_empty() {
                let r_min = min_state_max(mdp, |a| rewards[a]);
                trace.push(IterationRecord::new(DeltaVector::zeros(mdp.n()), r_min, policy.clone()));
            }
            trace.converged = true;
            break;
        }
        if trace.len() >= PI_MAX_ITERS {
            break;
        }
        let v = evaluate_with_rewards(mdp, &rewards, &policy)?;
        let delta: Vec<f64> = v.iter().map(|x| -x).collect();
        apply_delta_to_rewards(mdp, &mut rewards, &delta);
        for (c, d) in cumulative.iter_mut().zip(&delta) {
            *c += d;
        }
        let r_min = min_state_max(mdp, |a| rewards[a]);
        trace.push(IterationRecord::new(delta.into(), r_min, policy.clone()));
        policy = improve(mdp, &policy, |a| rewards[a]);
    }
    Ok(ExactBalancingOutcome {
        policy,
        cumulative: cumulative.into(),
        trace,
    })
}

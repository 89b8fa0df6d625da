//! Safe reward balancing (RB-S).
//!
//! Rewards are first shifted so that the largest is zero. Each iteration then
//! raises every state by `delta_s = -max_a r^a / (1 - gamma p^a_s)`, the
//! largest increment that keeps all of the state's own rewards nonpositive.
//! Side effects on other states only lower rewards, so the MDP stays
//! nonpositive throughout, and once every state's best reward is close to zero
//! the argmax-reward policy is close to optimal.

use crate::error::{Error, Result};
use crate::exact::ValueIterator;
use crate::geometry::apply_delta_to_rewards;
use crate::mdp::{Mdp, Policy};
use crate::trace::{IterationRecord, SolverTrace};
use crate::vectors::DeltaVector;

/// Tolerance for treating a per-state maximum reward as exactly zero.
pub const ZERO_REWARD_TOL: f64 = 1e-12;

/// Constants of the RB-S convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbBoundParams {
    /// Contraction rate, `max_a (gamma - gamma p_self) / (1 - gamma p_self)`.
    pub alpha: f64,
    /// `gamma * max_a p_self`.
    pub beta: f64,
    /// `1 - gamma * min_a p_self`.
    pub l: f64,
    /// `-min_s max_a r^a` on the shifted MDP.
    pub r_max: f64,
}

/// Subtracts the global maximum reward from every reward.
pub fn shift_rewards_nonpositive(mdp: &Mdp) -> (Mdp, f64) {
    let shift = mdp.max_reward();
    let rewards: Vec<f64> = mdp.actions().iter().map(|a| a.reward - shift).collect();
    (
        mdp.with_rewards(&rewards).expect("same action count"),
        shift,
    )
}

fn state_max(mdp: &Mdp, rewards: &[f64], alive: Option<&[bool]>, s: usize) -> f64 {
    mdp.state_actions(s)
        .iter()
        .filter(|&&a| alive.is_none_or(|al| al[a]))
        .map(|&a| rewards[a])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `min_s max_a r^a` over the (alive) actions.
pub(crate) fn min_of_state_max(mdp: &Mdp, rewards: &[f64], alive: Option<&[bool]>) -> f64 {
    (0..mdp.n())
        .map(|s| state_max(mdp, rewards, alive, s))
        .fold(f64::INFINITY, f64::min)
}

fn delta_for(mdp: &Mdp, rewards: &[f64], alive: Option<&[bool]>) -> Vec<f64> {
    let g = mdp.gamma();
    (0..mdp.n())
        .map(|s| {
            let best = mdp
                .state_actions(s)
                .iter()
                .filter(|&&a| alive.is_none_or(|al| al[a]))
                .map(|&a| {
                    let act = &mdp.actions()[a];
                    rewards[a] / (1.0 - g * act.self_loop_prob())
                })
                .fold(f64::NEG_INFINITY, f64::max);
            // rounding can leave a best reward a hair above zero
            (-best).max(0.0)
        })
        .collect()
}

/// Per-state RB-S increment for an MDP whose rewards are nonpositive.
pub fn rbs_delta(mdp: &Mdp) -> DeltaVector {
    delta_for(mdp, &mdp.rewards(), None).into()
}

/// Bound constants. `r_max` is measured after the nonpositive shift, so the
/// MDP may be passed shifted or not.
pub fn rbs_bound_params(mdp: &Mdp) -> RbBoundParams {
    let g = mdp.gamma();
    let mut alpha = 0.0_f64;
    let mut p_max = 0.0_f64;
    let mut p_min = 1.0_f64;
    for a in mdp.actions() {
        let p = a.self_loop_prob();
        alpha = alpha.max((g - g * p) / (1.0 - g * p));
        p_max = p_max.max(p);
        p_min = p_min.min(p);
    }
    let rewards = mdp.rewards();
    let r_max = mdp.max_reward() - min_of_state_max(mdp, &rewards, None);
    RbBoundParams {
        alpha,
        beta: g * p_max,
        l: 1.0 - g * p_min,
        r_max,
    }
}

/// Suboptimality bound of the argmax-reward policy after `t` iterations:
/// `alpha^t * l / ((1 - beta)(1 - gamma)) * r_max`.
pub fn rbs_epsilon_bound(params: &RbBoundParams, gamma: f64, t: usize) -> f64 {
    if params.r_max == 0.0 {
        return 0.0;
    }
    params.alpha.powi(t as i32) * params.l / ((1.0 - params.beta) * (1.0 - gamma)) * params.r_max
}

/// Bound on `|r_t^a - adv(a, pi*)|`: `2 r_max gamma^t / (1 - gamma)`.
pub fn reward_advantage_bound(r_max: f64, gamma: f64, t: usize) -> f64 {
    2.0 * r_max * gamma.powi(t as i32) / (1.0 - gamma)
}

/// Number of iterations after which `|R^m_t| / (1 - gamma) < epsilon` is
/// guaranteed.
pub fn rbs_iteration_bound(params: &RbBoundParams, gamma: f64, epsilon: f64) -> usize {
    if params.r_max <= 0.0 {
        return 0;
    }
    let target = epsilon * (1.0 - gamma) * (1.0 - params.beta) / (params.l * params.r_max);
    if target >= 1.0 {
        return 1;
    }
    if params.alpha <= 0.0 {
        return 1;
    }
    (target.ln() / params.alpha.ln()).ceil().max(0.0) as usize + 1
}

/// Iteration state of RB-S over an internal reward buffer.
#[derive(Debug, Clone)]
pub struct RewardBalancer<'a> {
    mdp: &'a Mdp,
    rewards: Vec<f64>,
    cumulative: Vec<f64>,
    alive: Option<Vec<bool>>,
    shift: f64,
    r_max: f64,
    t: usize,
}

/// What one RB-S update did.
#[derive(Debug, Clone)]
pub struct BalanceStep {
    pub delta: DeltaVector,
    /// `R^m_t`, read after the update.
    pub r_min: f64,
}

impl<'a> RewardBalancer<'a> {
    /// Starts from the MDP shifted so its largest reward is zero.
    pub fn new(mdp: &'a Mdp) -> Self {
        let shift = mdp.max_reward();
        let rewards = mdp.rewards().iter().map(|r| r - shift).collect();
        Self::from_rewards(mdp, rewards, shift)
    }

    /// Starts from the MDP's own rewards, which must all be nonpositive.
    pub fn without_shift(mdp: &'a Mdp) -> Result<Self> {
        if mdp.max_reward() > 0.0 {
            return Err(Error::InvalidParameter(
                "rewards must be nonpositive to balance without a shift".into(),
            ));
        }
        Ok(Self::from_rewards(mdp, mdp.rewards(), 0.0))
    }

    fn from_rewards(mdp: &'a Mdp, rewards: Vec<f64>, shift: f64) -> Self {
        let r_max = -min_of_state_max(mdp, &rewards, None);
        Self {
            mdp,
            rewards,
            cumulative: vec![0.0; mdp.n()],
            alive: None,
            shift,
            r_max,
            t: 0,
        }
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Sum of all increments applied so far.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `r_max`, frozen at the start.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn r_min(&self) -> f64 {
        min_of_state_max(self.mdp, &self.rewards, self.alive.as_deref())
    }

    /// Argmax-reward policy over the alive actions.
    pub fn policy(&self) -> Policy {
        match &self.alive {
            None => Policy::argmax_reward(self.mdp, &self.rewards),
            Some(alive) => Policy::argmax_by(self.mdp, |a| {
                if alive[a] {
                    self.rewards[a]
                } else {
                    f64::NEG_INFINITY
                }
            }),
        }
    }

    pub fn step(&mut self) -> BalanceStep {
        let delta = delta_for(self.mdp, &self.rewards, self.alive.as_deref());
        apply_delta_to_rewards(self.mdp, &mut self.rewards, &delta);
        for (c, d) in self.cumulative.iter_mut().zip(&delta) {
            *c += d;
        }
        self.t += 1;
        BalanceStep {
            delta: delta.into(),
            r_min: self.r_min(),
        }
    }

    /// Removes every alive action with `r^a < -threshold`; returns how many
    /// were removed.
    /// Drops actions whose reward is below `-threshold`. A state's best alive
    /// action is always kept, so rounding can never empty a state.
    fn filter_below(&mut self, threshold: f64) -> usize {
        let rewards = &self.rewards;
        let alive = self
            .alive
            .get_or_insert_with(|| vec![true; rewards.len()]);
        let mut removed = 0;
        for s in 0..self.mdp.n() {
            let acts = self.mdp.state_actions(s);
            let best = acts
                .iter()
                .copied()
                .filter(|&a| alive[a])
                .max_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
            for &a in acts {
                if alive[a] && Some(a) != best && rewards[a] < -threshold {
                    alive[a] = false;
                    removed += 1;
                }
            }
        }
        removed
    }

    fn alive_flags(&self) -> Vec<bool> {
        self.alive
            .clone()
            .unwrap_or_else(|| vec![true; self.rewards.len()])
    }
}

#[derive(Debug, Clone)]
pub struct RbsOutcome {
    pub policy: Policy,
    /// Sum of the increments; `-cumulative` estimates the optimal values of
    /// the shifted MDP.
    pub cumulative: DeltaVector,
    /// Amount subtracted from every reward before balancing.
    pub shift: f64,
    pub trace: SolverTrace,
}

/// RB-S until `|R^m_t| / (1 - gamma) < epsilon`. The check runs once before
/// the first update. The trace's `converged` flag is false if `max_iters` ran
/// out first.
pub fn rbs_solve(mdp: &Mdp, epsilon: f64, max_iters: usize) -> Result<RbsOutcome> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let g = mdp.gamma();
    let params = rbs_bound_params(mdp);
    let mut balancer = RewardBalancer::new(mdp);
    let mut trace = SolverTrace::new("rbs", epsilon);
    let mut r_min = balancer.r_min();
    while r_min.abs() / (1.0 - g) >= epsilon && balancer.iteration() < max_iters {
        let step = balancer.step();
        r_min = step.r_min;
        let t = balancer.iteration();
        let mut rec = IterationRecord::new(step.delta, r_min, balancer.policy());
        rec.bound_epsilon = Some(rbs_epsilon_bound(&params, g, t));
        rec.advantage_bound = Some(reward_advantage_bound(balancer.r_max(), g, t));
        trace.push(rec);
    }
    trace.converged = r_min.abs() / (1.0 - g) < epsilon;
    Ok(RbsOutcome {
        policy: balancer.policy(),
        cumulative: balancer.cumulative.clone().into(),
        shift: balancer.shift(),
        trace,
    })
}

/// Surviving actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub alive: Vec<Vec<usize>>,
}

impl FilterState {
    fn from_flags(mdp: &Mdp, flags: &[bool]) -> Self {
        Self {
            alive: (0..mdp.n())
                .map(|s| {
                    mdp.state_actions(s)
                        .iter()
                        .copied()
                        .filter(|&a| flags[a])
                        .collect()
                })
                .collect(),
        }
    }

    pub fn max_alive(&self) -> usize {
        self.alive.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_resolved(&self) -> bool {
        self.alive.iter().all(|a| a.len() == 1)
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub policy: Policy,
    /// True when every state ended with a single surviving action.
    pub exact: bool,
    pub filter: FilterState,
    pub trace: SolverTrace,
}

/// RB-S with action filtering. After iteration `t` (including `t = 0`), an
/// action is dropped once `r_t^a < -2 r_max gamma^t / (1 - gamma)`; it cannot
/// belong to an optimal policy. Terminates when each state keeps exactly one
/// action, which is then optimal provided the optimum is unique. Otherwise the
/// argmax policy is returned with `exact = false` after `max_iters`.
pub fn rbs_with_filtering(mdp: &Mdp, max_iters: usize) -> Result<FilterOutcome> {
    let g = mdp.gamma();
    let params = rbs_bound_params(mdp);
    let mut balancer = RewardBalancer::new(mdp);
    let r_max = balancer.r_max();
    let mut trace = SolverTrace::new("rbs-filter", 0.0);
    balancer.filter_below(reward_advantage_bound(r_max, g, 0));
    let mut state = FilterState::from_flags(mdp, &balancer.alive_flags());
    while !state.is_resolved() && balancer.iteration() < max_iters {
        let step = balancer.step();
        let t = balancer.iteration();
        balancer.filter_below(reward_advantage_bound(r_max, g, t));
        state = FilterState::from_flags(mdp, &balancer.alive_flags());
        let mut rec = IterationRecord::new(step.delta, step.r_min, balancer.policy());
        rec.bound_epsilon = Some(rbs_epsilon_bound(&params, g, t));
        rec.advantage_bound = Some(reward_advantage_bound(r_max, g, t));
        rec.max_alive_actions = Some(state.max_alive());
        trace.push(rec);
    }
    let exact = state.is_resolved();
    trace.converged = exact;
    let policy = if exact {
        Policy::new(state.alive.iter().map(|a| a[0]).collect())
    } else {
        balancer.policy()
    };
    Ok(FilterOutcome {
        policy,
        exact,
        filter: state,
        trace,
    })
}

/// One step of the side-by-side RB-S / value iteration comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceStep {
    pub t: usize,
    pub same_selection: bool,
    /// `||cumulative_t + V_t||_inf`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub steps: Vec<EquivalenceStep>,
}

impl EquivalenceReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.steps.iter().all(|s| s.same_selection && s.gap <= tol)
    }

    pub fn max_gap(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.gap))
    }
}

/// Runs RB-S and value iteration (from `V_0 = 0`) side by side for `steps`
/// iterations on a diagonal-free MDP with nonpositive rewards. Without
/// self-loops the two coincide: the argmax-reward choices equal the greedy
/// choices and the cumulative RB-S increment equals `-V_t`.
pub fn check_diagonal_free_equivalence(mdp: &Mdp, steps: usize) -> Result<EquivalenceReport> {
    if !mdp.is_diagonal_free() {
        return Err(Error::InvalidParameter("MDP has self-loop transitions".into()));
    }
    let mut balancer = RewardBalancer::without_shift(mdp)?;
    let mut vi = ValueIterator::new(mdp, DeltaVector::zeros(mdp.n()).into_inner().into())?;
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        balancer.step();
        vi.step();
        let same_selection = balancer.policy() == vi.greedy();
        let gap = balancer
            .cumulative()
            .iter()
            .zip(vi.values().iter())
            .fold(0.0_f64, |m, (c, v)| m.max((c + v).abs()));
        out.push(EquivalenceStep {
            t,
            same_selection,
            gap,
        });
    }
    Ok(EquivalenceReport { steps: out })
}

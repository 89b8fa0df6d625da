//! Canonical MDP representation, validation and the Bellman machinery.
//!
//! Values follow the Bellman operator convention: a self-loop with reward `r`
//! is worth `r / (1 - gamma)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::ValueVector;
use crate::PROB_SUM_TOL;

/// One action: the state that owns it, its deterministic reward and a sparse
/// next-state distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub state: usize,
    pub reward: f64,
    pub transitions: Vec<(usize, f64)>,
}

impl Action {
    pub fn new(state: usize, reward: f64, transitions: Vec<(usize, f64)>) -> Self {
        Self {
            state,
            reward,
            transitions,
        }
    }

    /// Probability of staying in the owning state.
    pub fn self_loop_prob(&self) -> f64 {
        self.prob_to(self.state)
    }

    pub fn prob_to(&self, dest: usize) -> f64 {
        self.transitions
            .iter()
            .filter(|(s, _)| *s == dest)
            .map(|(_, p)| p)
            .sum()
    }

    /// `sum_s' P(s'|a) v(s')`.
    #[inline]
    pub fn expect(&self, v: &[f64]) -> f64 {
        self.transitions.iter().map(|&(s, p)| p * v[s]).sum()
    }
}

/// A finite discounted MDP. Action indices are permanent identities: every
/// transformation keeps the action order and only rewrites rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n: usize,
    gamma: f64,
    actions: Vec<Action>,
    state_actions: Vec<Vec<usize>>,
}

impl Mdp {
    /// Builds and validates an MDP.
    pub fn new(n: usize, gamma: f64, actions: Vec<Action>) -> Result<Self> {
        let mdp = Self::new_unchecked(n, gamma, actions);
        let report = validate_mdp(&mdp);
        if report.is_ok() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    /// Builds an MDP without validation. Actions whose owning state is out of
    /// range are kept but not indexed; run [`validate_mdp`] before solving.
    pub fn new_unchecked(n: usize, gamma: f64, actions: Vec<Action>) -> Self {
        let mut state_actions = vec![Vec::new(); n];
        for (idx, a) in actions.iter().enumerate() {
            if a.state < n {
                state_actions[a.state].push(idx);
            }
        }
        Self {
            n,
            gamma,
            actions,
            state_actions,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: usize) -> Result<&Action> {
        self.actions.get(a).ok_or(Error::InvalidAction(a))
    }

    /// Indices of the actions owned by `s`, in ascending order.
    pub fn state_actions(&self, s: usize) -> &[usize] {
        &self.state_actions[s]
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.actions.iter().map(|a| a.reward).collect()
    }

    pub fn max_reward(&self) -> f64 {
        self.actions
            .iter()
            .map(|a| a.reward)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy of this MDP with every reward replaced.
    pub fn with_rewards(&self, rewards: &[f64]) -> Result<Self> {
        if rewards.len() != self.actions.len() {
            return Err(Error::DimensionMismatch {
                expected: self.actions.len(),
                got: rewards.len(),
            });
        }
        let mut out = self.clone();
        for (a, &r) in out.actions.iter_mut().zip(rewards) {
            a.reward = r;
        }
        Ok(out)
    }

    /// True when no action can stay in its own state.
    pub fn is_diagonal_free(&self) -> bool {
        self.actions.iter().all(|a| a.self_loop_prob() == 0.0)
    }

    pub fn max_actions_per_state(&self) -> usize {
        self.state_actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            })
        }
    }
}

/// A deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(choice: Vec<usize>) -> Self {
        Self(choice)
    }

    pub fn choice(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.0.len() != mdp.n() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, MDP has {}",
                self.0.len(),
                mdp.n()
            )));
        }
        for (s, &a) in self.0.iter().enumerate() {
            let action = mdp.action(a)?;
            if action.state != s {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} chooses action {a} owned by state {}",
                    action.state
                )));
            }
        }
        Ok(())
    }

    /// Per state, the action with the largest score; ties go to the lowest
    /// action index.
    pub fn argmax_by(mdp: &Mdp, mut score: impl FnMut(usize) -> f64) -> Self {
        let choice = (0..mdp.n())
            .map(|s| {
                let mut best = usize::MAX;
                let mut best_score = f64::NEG_INFINITY;
                for &a in mdp.state_actions(s) {
                    let sc = score(a);
                    if best == usize::MAX || sc > best_score {
                        best = a;
                        best_score = sc;
                    }
                }
                best
            })
            .collect();
        Self(choice)
    }

    /// Per state, the action with the largest entry of `rewards`.
    pub fn argmax_reward(mdp: &Mdp, rewards: &[f64]) -> Self {
        Self::argmax_by(mdp, |a| rewards[a])
    }

    /// Stable 64-bit FNV-1a fingerprint of the action choices.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &a in &self.0 {
            for b in (a as u64).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    GammaOutOfRange(f64),
    StateWithoutActions(usize),
    OwnerOutOfRange { action: usize, state: usize },
    NonFiniteReward { action: usize },
    EmptyTransitions { action: usize },
    DestinationOutOfRange { action: usize, dest: usize },
    DuplicateDestination { action: usize, dest: usize },
    ProbabilityOutOfRange { action: usize, dest: usize, prob: f64 },
    ProbabilitySum { action: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "MDP has no states"),
            Violation::GammaOutOfRange(g) => write!(f, "gamma out of range: {g} not in (0, 1)"),
            Violation::StateWithoutActions(s) => write!(f, "state {s} has no actions"),
            Violation::OwnerOutOfRange { action, state } => {
                write!(f, "action {action}: owning state {state} out of range")
            }
            Violation::NonFiniteReward { action } => write!(f, "action {action}: reward is not finite"),
            Violation::EmptyTransitions { action } => write!(f, "action {action}: no transitions"),
            Violation::DestinationOutOfRange { action, dest } => {
                write!(f, "action {action}: destination {dest} out of range")
            }
            Violation::DuplicateDestination { action, dest } => {
                write!(f, "action {action}: duplicate destination {dest}")
            }
            Violation::ProbabilityOutOfRange { action, dest, prob } => {
                write!(f, "action {action}: probability {prob} to state {dest} outside [0, 1]")
            }
            Violation::ProbabilitySum { action, sum } => {
                write!(f, "action {action}: probabilities sum {sum} ≠ 1")
            }
        }
    }
}

/// Result of [`validate_mdp`]: empty when the MDP is well formed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports all violations found.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    let n = mdp.n();
    if n == 0 {
        violations.push(Violation::NoStates);
    }
    let g = mdp.gamma();
    if !(g > 0.0 && g < 1.0) {
        violations.push(Violation::GammaOutOfRange(g));
    }
    for (idx, a) in mdp.actions().iter().enumerate() {
        if a.state >= n {
            violations.push(Violation::OwnerOutOfRange {
                action: idx,
                state: a.state,
            });
        }
        if !a.reward.is_finite() {
            violations.push(Violation::NonFiniteReward { action: idx });
        }
        if a.transitions.is_empty() {
            violations.push(Violation::EmptyTransitions { action: idx });
        }
        let mut seen = Vec::with_capacity(a.transitions.len());
        let mut sum = 0.0;
        for &(dest, p) in &a.transitions {
            if dest >= n {
                violations.push(Violation::DestinationOutOfRange { action: idx, dest });
            }
            if seen.contains(&dest) {
                violations.push(Violation::DuplicateDestination { action: idx, dest });
            }
            seen.push(dest);
            if !(0.0..=1.0).contains(&p) {
                violations.push(Violation::ProbabilityOutOfRange {
                    action: idx,
                    dest,
                    prob: p,
                });
            }
            sum += p;
        }
        if !a.transitions.is_empty() && (sum - 1.0).abs() > PROB_SUM_TOL {
            violations.push(Violation::ProbabilitySum { action: idx, sum });
        }
    }
    for s in 0..n {
        if mdp.state_actions(s).is_empty() {
            violations.push(Violation::StateWithoutActions(s));
        }
    }
    ValidationReport { violations }
}

/// `(T^pi v)(s) = r(pi(s)) + gamma * sum_s' P(s'|pi(s)) v(s')`.
pub fn bellman_apply(mdp: &Mdp, policy: &Policy, v: &[f64]) -> Result<ValueVector> {
    mdp.check_len(v)?;
    policy.validate(mdp)?;
    let g = mdp.gamma();
    Ok(policy
        .choice()
        .iter()
        .map(|&a| {
            let act = &mdp.actions()[a];
            act.reward + g * act.expect(v)
        })
        .collect::<Vec<_>>()
        .into())
}

/// One application of the Bellman optimality operator. Returns the backed-up
/// values and the policy attaining the maximum in every state.
pub fn bellman_optimality(mdp: &Mdp, v: &[f64]) -> (ValueVector, Policy) {
    let g = mdp.gamma();
    let policy = Policy::argmax_by(mdp, |a| {
        let act = &mdp.actions()[a];
        act.reward + g * act.expect(v)
    });
    let values = policy
        .choice()
        .iter()
        .map(|&a| {
            let act = &mdp.actions()[a];
            act.reward + g * act.expect(v)
        })
        .collect::<Vec<_>>();
    (values.into(), policy)
}

/// Exact policy evaluation: solves `(I - gamma P_pi) V = r_pi` by LU with
/// partial pivoting and checks the residual.
pub fn evaluate_policy(mdp: &Mdp, policy: &Policy) -> Result<ValueVector> {
    policy.validate(mdp)?;
    evaluate_with_rewards(mdp, &mdp.rewards(), policy)
}

/// Policy evaluation against an external reward vector (same transitions).
/// The policy is assumed valid.
pub(crate) fn evaluate_with_rewards(mdp: &Mdp, rewards: &[f64], policy: &Policy) -> Result<ValueVector> {
    let n = mdp.n();
    let g = mdp.gamma();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (s, &act_idx) in policy.choice().iter().enumerate() {
        let act = &mdp.actions()[act_idx];
        for &(dest, p) in &act.transitions {
            a[(s, dest)] -= g * p;
        }
        b[s] = rewards[act_idx];
    }
    let lu = a.clone().lu();
    let scale = b.amax().max(1.0);
    let bound = 1e-10 * scale;
    let mut x = lu.solve(&b).ok_or(Error::NumericalFailure {
        residual: f64::INFINITY,
        bound,
    })?;
    let mut residual = (&a * &x - &b).amax();
    if residual > bound {
        // one round of iterative refinement
        let r = &b - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
            residual = (&a * &x - &b).amax();
        }
    }
    if !(residual <= bound) {
        return Err(Error::NumericalFailure { residual, bound });
    }
    Ok(x.iter().copied().collect::<Vec<_>>().into())
}

/// `adv(b) = r^b + gamma * sum_i p^b_i v(i) - v(st(b))`.
pub fn advantage(mdp: &Mdp, v: &[f64], action: usize) -> Result<f64> {
    mdp.check_len(v)?;
    let act = mdp.action(action)?;
    Ok(advantage_with_reward(mdp.gamma(), act, act.reward, v))
}

#[inline]
pub(crate) fn advantage_with_reward(gamma: f64, act: &Action, reward: f64, v: &[f64]) -> f64 {
    reward + gamma * act.expect(v) - v[act.state]
}

/// Per state, the action with the highest advantage against `v` (lowest index
/// on ties).
pub fn greedy_policy(mdp: &Mdp, v: &[f64]) -> Result<Policy> {
    mdp.check_len(v)?;
    let g = mdp.gamma();
    Ok(Policy::argmax_by(mdp, |a| {
        let act = &mdp.actions()[a];
        advantage_with_reward(g, act, act.reward, v)
    }))
}

/// `||V* - V^pi||_inf`.
pub fn policy_suboptimality(mdp: &Mdp, policy: &Policy, v_star: &[f64]) -> Result<f64> {
    mdp.check_len(v_star)?;
    let v = evaluate_policy(mdp, policy)?;
    Ok(v.max_abs_diff(v_star))
}

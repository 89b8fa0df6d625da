//! The action-space embedding and the advantage-preserving reward
//! transformations.
//!
//! An action `a` owned by state `st(a)` maps to the `(n+1)`-vector
//! `(r^a, gamma p^a_1 - [st(a)=1], ..., gamma p^a_n - [st(a)=n])`. A policy
//! maps to `(1, V^pi(1), ..., V^pi(n))`, and the dot product of the two is the
//! advantage of the action against the policy.
//!
//! Transforming state `s` by `delta` rewrites rewards so that every policy's
//! value at `s` rises by `delta` while every advantage stays put.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exact::{argmax_reward_policy, policy_iteration};
use crate::mdp::{advantage_with_reward, evaluate_policy, Mdp, Policy};
use crate::vectors::{DeltaVector, ValueVector};
use crate::IDENTITY_TOL;

/// `(reward, c_1, ..., c_n)` for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector(pub Vec<f64>);

impl ActionVector {
    pub fn reward(&self) -> f64 {
        self.0[0]
    }

    /// The transition coordinates `c_1..c_n`.
    pub fn coords(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn dot(&self, policy: &PolicyVector) -> f64 {
        self.0.iter().zip(&policy.0).map(|(a, b)| a * b).sum()
    }
}

/// `(1, V(1), ..., V(n))`; the normal of a policy hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyVector(pub Vec<f64>);

impl PolicyVector {
    pub fn from_values(v: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(v.len() + 1);
        coords.push(1.0);
        coords.extend_from_slice(v);
        Self(coords)
    }

    pub fn values(&self) -> &[f64] {
        &self.0[1..]
    }
}

pub fn action_vector(mdp: &Mdp, action: usize) -> Result<ActionVector> {
    let act = mdp.action(action)?;
    let g = mdp.gamma();
    let mut coords = vec![0.0; mdp.n() + 1];
    coords[0] = act.reward;
    for &(dest, p) in &act.transitions {
        coords[dest + 1] += g * p;
    }
    coords[act.state + 1] -= 1.0;
    Ok(ActionVector(coords))
}

/// Normal `(1, w)` of the hyperplane through the policy's action vectors,
/// found by solving `<a^+, (1, w)> = 0` for every chosen action.
pub fn hyperplane_normal(mdp: &Mdp, policy: &Policy) -> Result<PolicyVector> {
    policy.validate(mdp)?;
    let n = mdp.n();
    let mut c = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for s in 0..n {
        let av = action_vector(mdp, policy.action(s))?;
        rhs[s] = -av.reward();
        for (j, &x) in av.coords().iter().enumerate() {
            c[(s, j)] = x;
        }
    }
    let w = c.lu().solve(&rhs).ok_or(Error::NumericalFailure {
        residual: f64::INFINITY,
        bound: 0.0,
    })?;
    Ok(PolicyVector::from_values(w.as_slice()))
}

/// Recovers state values from where the hyperplane crosses each self-loop
/// line `L_s = {(c0, (gamma - 1) e_s)}`: the crossing height is
/// `(1 - gamma) V(s)`.
pub fn selfloop_intersection_heights(normal: &PolicyVector, gamma: f64) -> Result<Vec<f64>> {
    let w0 = normal.0[0];
    if w0 == 0.0 || !w0.is_finite() {
        return Err(Error::InvalidParameter(
            "hyperplane normal must have a non-zero reward coordinate".into(),
        ));
    }
    // Line point p(c0) = c0 e_0 + (gamma - 1) e_s; solve <normal, p(c0)> = 0.
    Ok(normal
        .values()
        .iter()
        .map(|&ws| -(gamma - 1.0) * ws / w0)
        .collect())
}

pub fn selfloop_intersection_values(normal: &PolicyVector, gamma: f64) -> Result<ValueVector> {
    let heights = selfloop_intersection_heights(normal, gamma)?;
    Ok(heights
        .into_iter()
        .map(|h| h / (1.0 - gamma))
        .collect::<Vec<_>>()
        .into())
}

/// Transformation of a single state: raises every policy's value at `s` by
/// `delta`.
pub fn apply_transformation(mdp: &Mdp, s: usize, delta: f64) -> Result<Mdp> {
    if s >= mdp.n() {
        return Err(Error::InvalidState(s));
    }
    let g = mdp.gamma();
    let rewards: Vec<f64> = mdp
        .actions()
        .iter()
        .map(|a| {
            let p = a.prob_to(s);
            if a.state == s {
                a.reward - delta * (g * p - 1.0)
            } else {
                a.reward - delta * g * p
            }
        })
        .collect();
    mdp.with_rewards(&rewards)
}

/// Composition of the single-state transformations over all states, in one
/// pass: `r^a <- r^a + delta_{st(a)} - gamma sum_s' p^a_s' delta_s'`.
pub fn apply_delta(mdp: &Mdp, delta: &[f64]) -> Result<Mdp> {
    mdp.check_len(delta)?;
    let mut rewards = mdp.rewards();
    apply_delta_to_rewards(mdp, &mut rewards, delta);
    mdp.with_rewards(&rewards)
}

/// In-place variant over an external reward buffer.
pub(crate) fn apply_delta_to_rewards(mdp: &Mdp, rewards: &mut [f64], delta: &[f64]) {
    let g = mdp.gamma();
    for (r, a) in rewards.iter_mut().zip(mdp.actions()) {
        *r += delta[a.state] - g * a.expect(delta);
    }
}

/// Normal form of an MDP and the increment `-V*` that produces it.
#[derive(Debug, Clone)]
pub struct Normalization {
    pub mdp: Mdp,
    pub delta: DeltaVector,
    pub optimal_policy: Policy,
}

/// Shifts every optimal value to zero. Optimal values come from policy
/// iteration, so the result is certified rather than approximate.
pub fn normalize(mdp: &Mdp) -> Result<Normalization> {
    let pi = policy_iteration(mdp, &argmax_reward_policy(mdp))?;
    let delta: Vec<f64> = pi.values.iter().map(|v| -v).collect();
    let normalized = apply_delta(mdp, &delta)?;
    Ok(Normalization {
        mdp: normalized,
        delta: delta.into(),
        optimal_policy: pi.policy,
    })
}

/// True iff every optimal value is within `tol` of zero.
pub fn is_normal(mdp: &Mdp, tol: f64) -> Result<bool> {
    let pi = policy_iteration(mdp, &argmax_reward_policy(mdp))?;
    Ok(pi.values.inf_norm() <= tol)
}

/// Hyperplane dominance: no action lies above the policy's hyperplane by more
/// than `tol`.
pub fn certify_optimal(mdp: &Mdp, policy: &Policy, tol: f64) -> Result<bool> {
    let v = evaluate_policy(mdp, policy)?;
    let g = mdp.gamma();
    Ok(mdp
        .actions()
        .iter()
        .all(|a| advantage_with_reward(g, a, a.reward, &v) <= tol))
}

/// Same as [`certify_optimal`] at the default tolerance.
pub fn is_certified_optimal(mdp: &Mdp, policy: &Policy) -> Result<bool> {
    certify_optimal(mdp, policy, IDENTITY_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedAction {
    pub id: usize,
    pub coords: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPolicy {
    pub name: String,
    /// `(state, (1 - gamma) V^pi(state))` for every state.
    pub heights: Vec<(usize, f64)>,
}

/// Tabular dump of the action space for external plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub n: usize,
    pub actions: Vec<ProjectedAction>,
    pub policies: Vec<ProjectedPolicy>,
}

impl Projection {
    /// `kind,id,c1,...,cn,reward` rows for actions, then
    /// `policy,<name>,state,height` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,id");
        for i in 1..=self.n {
            let _ = write!(out, ",c{i}");
        }
        out.push_str(",reward\n");
        for a in &self.actions {
            let _ = write!(out, "action,{}", a.id);
            for c in &a.coords {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{}", a.reward);
        }
        for p in &self.policies {
            for (s, h) in &p.heights {
                let _ = writeln!(out, "policy,{},{},{}", p.name, s, h);
            }
        }
        out
    }
}

pub fn export_projection(mdp: &Mdp, policies: &[(String, Policy)]) -> Result<Projection> {
    let actions = (0..mdp.num_actions())
        .map(|a| {
            let v = action_vector(mdp, a)?;
            Ok(ProjectedAction {
                id: a,
                coords: v.coords().to_vec(),
                reward: v.reward(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let policies = policies
        .iter()
        .map(|(name, p)| {
            let normal = hyperplane_normal(mdp, p)?;
            let heights = selfloop_intersection_heights(&normal, mdp.gamma())?;
            Ok(ProjectedPolicy {
                name: name.clone(),
                heights: heights.into_iter().enumerate().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Projection {
        n: mdp.n(),
        actions,
        policies,
    })
}

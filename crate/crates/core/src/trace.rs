//! Per-iteration solver records and their CSV export.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{policy_suboptimality, Mdp, Policy};
use crate::vectors::DeltaVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// Increment applied in this iteration (value change for value-based
    /// solvers, reward-transformation increment for reward balancing).
    pub delta: DeltaVector,
    /// Minimum over states of the per-state maximum reward (or the analogous
    /// quantity for value-based solvers).
    pub r_min: f64,
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_alive_actions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suboptimality: Option<f64>,
}

impl IterationRecord {
    pub fn new(delta: DeltaVector, r_min: f64, policy: Policy) -> Self {
        Self {
            iter: 0,
            delta,
            r_min,
            policy,
            bound_epsilon: None,
            advantage_bound: None,
            max_alive_actions: None,
            suboptimality: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub solver: String,
    pub tolerance: f64,
    pub seed: Option<u64>,
    /// False when the solver stopped on its iteration cap.
    pub converged: bool,
    pub iterations: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn new(solver: impl Into<String>, tolerance: f64) -> Self {
        Self {
            solver: solver.into(),
            tolerance,
            seed: None,
            converged: false,
            iterations: Vec::new(),
        }
    }

    /// Appends a record, numbering it after the last one.
    pub fn push(&mut self, mut record: IterationRecord) {
        record.iter = self.iterations.len() + 1;
        self.iterations.push(record);
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn policies(&self) -> Vec<&Policy> {
        self.iterations.iter().map(|r| &r.policy).collect()
    }

    /// Fills in `suboptimality` for every record against known optimal values.
    pub fn annotate_suboptimality(&mut self, mdp: &Mdp, v_star: &[f64]) -> Result<()> {
        let mut cache: HashMap<Policy, f64> = HashMap::new();
        for rec in &mut self.iterations {
            let gap = match cache.get(&rec.policy) {
                Some(&g) => g,
                None => {
                    let g = policy_suboptimality(mdp, &rec.policy, v_star)?;
                    cache.insert(rec.policy.clone(), g);
                    g
                }
            };
            rec.suboptimality = Some(gap);
        }
        Ok(())
    }

    /// CSV with header `iter,rmin,delta_inf_norm,policy_hash,suboptimality`;
    /// reward-balancing traces add
    /// `epsilon_bound_thm6,corollary_bound,max_alive_actions`.
    pub fn to_csv(&self) -> String {
        let extended = self.iterations.iter().any(|r| {
            r.bound_epsilon.is_some() || r.advantage_bound.is_some() || r.max_alive_actions.is_some()
        });
        let mut out = String::from("iter,rmin,delta_inf_norm,policy_hash,suboptimality");
        if extended {
            out.push_str(",epsilon_bound_thm6,corollary_bound,max_alive_actions");
        }
        out.push('\n');
        for r in &self.iterations {
            let _ = write!(
                out,
                "{},{},{},{:016x},{}",
                r.iter,
                r.r_min,
                r.delta.inf_norm(),
                r.policy.fingerprint(),
                opt(r.suboptimality)
            );
            if extended {
                let alive = r.max_alive_actions.map(|x| x.to_string()).unwrap_or_default();
                let _ = write!(out, ",{},{},{}", opt(r.bound_epsilon), opt(r.advantage_bound), alive);
            }
            out.push('\n');
        }
        out
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

//! Solvers for MDPs whose transitions are only available through a generative
//! model: stochastic reward balancing (single and federated), sample-size
//! planning and a synchronous Q-learning baseline.
//!
//! Each round draws `k` next states per action. The update never builds an
//! action-to-action matrix; it only needs the per-state maxima `R_t` and, for
//! each action, the average of `R_t` over its sampled destinations.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::min_of_state_max;
use crate::error::{Error, Result};
use crate::exact::solve_optimal;
use crate::mdp::{Mdp, Policy};
use crate::rng::stream;

/// Hidden ground truth plus the master seed for all sampling.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub mdp: Mdp,
    pub seed: u64,
}

impl GenerativeModel {
    pub fn new(mdp: Mdp, seed: u64) -> Self {
        Self { mdp, seed }
    }
}

/// Next-state counts per action, aligned with each action's transition list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalTransitions {
    pub counts: Vec<Vec<u64>>,
    /// Samples per action (the same for every action).
    pub total: u64,
}

impl EmpiricalTransitions {
    /// Empirical frequencies of one action, aligned with its transition list.
    pub fn frequencies(&self, a: usize) -> Vec<f64> {
        let t = self.total as f64;
        self.counts[a].iter().map(|&c| c as f64 / t).collect()
    }

    /// Pools another batch of samples into this one.
    pub fn absorb(&mut self, other: &EmpiricalTransitions) {
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in mine.iter_mut().zip(theirs) {
                *x += y;
            }
        }
        self.total += other.total;
    }

    fn empty_like(mdp: &Mdp) -> Self {
        Self {
            counts: mdp.actions().iter().map(|a| vec![0; a.transitions.len()]).collect(),
            total: 0,
        }
    }
}

/// Source of the per-action expectation `sum_s' P(s'|a) v(s')` used in a round.
pub trait TransitionEstimate {
    fn expect(&self, mdp: &Mdp, a: usize, v: &[f64]) -> f64;
}

/// The true transition probabilities.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactTransitions;

impl TransitionEstimate for ExactTransitions {
    fn expect(&self, mdp: &Mdp, a: usize, v: &[f64]) -> f64 {
        mdp.actions()[a].expect(v)
    }
}

impl TransitionEstimate for EmpiricalTransitions {
    fn expect(&self, mdp: &Mdp, a: usize, v: &[f64]) -> f64 {
        let sum: f64 = mdp.actions()[a]
            .transitions
            .iter()
            .zip(&self.counts[a])
            .map(|(&(s, _), &c)| c as f64 * v[s])
            .sum();
        sum / self.total as f64
    }
}

/// `k` draws from a categorical distribution, via a chain of conditional
/// binomials so the cost does not grow with `k`.
fn multinomial<R: Rng>(rng: &mut R, k: u64, probs: &[(usize, f64)]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = k;
    let mut mass = 1.0;
    let last = probs.len() - 1;
    for (i, &(_, p)) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == last {
            out[i] = left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let c = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("q in [0, 1)").sample(rng)
        };
        out[i] = c;
        left -= c;
        mass -= p;
    }
    out
}

/// One worker's samples for one round, drawn from stream
/// `(seed, worker, round)`.
pub fn sample_worker(model: &GenerativeModel, k: u64, round: u64, worker: u64) -> Result<EmpiricalTransitions> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut rng = stream(model.seed, worker, round);
    let counts = model
        .mdp
        .actions()
        .iter()
        .map(|a| multinomial(&mut rng, k, &a.transitions))
        .collect();
    Ok(EmpiricalTransitions { counts, total: k })
}

/// Samples of worker 0.
pub fn sample_empirical(model: &GenerativeModel, k: u64, round: u64) -> Result<EmpiricalTransitions> {
    sample_worker(model, k, round, 0)
}

/// Samples of `workers` workers drawn in parallel and pooled.
pub fn sample_federated(model: &GenerativeModel, workers: u64, k: u64, round: u64) -> Result<EmpiricalTransitions> {
    if workers == 0 {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    let batches = (0..workers)
        .into_par_iter()
        .map(|w| sample_worker(model, k, round, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool(&model.mdp, &batches))
}

/// Same samples as [`sample_federated`], drawn one worker after another.
pub fn sample_pooled_sequential(model: &GenerativeModel, workers: u64, k: u64, round: u64) -> Result<EmpiricalTransitions> {
    let mut acc = EmpiricalTransitions::empty_like(&model.mdp);
    for w in 0..workers {
        acc.absorb(&sample_worker(model, k, round, w)?);
    }
    Ok(acc)
}

fn pool(mdp: &Mdp, batches: &[EmpiricalTransitions]) -> EmpiricalTransitions {
    let mut acc = EmpiricalTransitions::empty_like(mdp);
    for b in batches {
        acc.absorb(b);
    }
    acc
}

/// When a stochastic run ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stopping {
    /// Exactly this many rounds.
    Fixed(usize),
    /// Until `|R^min| / (1 - gamma) < epsilon`, at most `cap` rounds.
    Observable { epsilon: f64, cap: usize },
}

impl Stopping {
    fn cap(&self) -> usize {
        match *self {
            Stopping::Fixed(t) => t,
            Stopping::Observable { cap, .. } => cap,
        }
    }

    fn done(&self, r_min: f64, gamma: f64) -> bool {
        match *self {
            Stopping::Fixed(_) => false,
            Stopping::Observable { epsilon, .. } => r_min.abs() / (1.0 - gamma) < epsilon,
        }
    }
}

/// How each round's transitions are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Use the true probabilities (the infinite-sample limit).
    Exact,
    /// `workers` workers with `k` samples per action each.
    Generative { workers: u64, k: u64 },
    /// The same samples as `Generative`, drawn by one process worker after
    /// worker.
    Pooled { workers: u64, k: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round 0 is the state before any update.
    pub round: usize,
    /// `R^min` for reward balancing; absent for Q-learning.
    pub r_min_of_max: Option<f64>,
    /// Optimal-action gap of the current policy on the original rewards.
    pub metric_gap: Option<f64>,
    pub wallclock_ns: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticOutcome {
    pub policy: Policy,
    /// Final balanced rewards.
    pub rewards: Vec<f64>,
    pub rounds: usize,
    pub trace: Vec<RoundRecord>,
}

pub fn rounds_to_csv(trace: &[RoundRecord]) -> String {
    let mut out = String::from("round,rminofmax,metric_gap,wallclock_ns\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.round,
            opt(r.r_min_of_max),
            opt(r.metric_gap),
            r.wallclock_ns
        );
    }
    out
}

/// `max_s |r(pi*(s)) - r(pi_hat(s))|` on the MDP's own rewards.
pub fn optimal_action_gap(mdp: &Mdp, optimal: &Policy, implied: &Policy) -> f64 {
    (0..mdp.n())
        .map(|s| (mdp.actions()[optimal.action(s)].reward - mdp.actions()[implied.action(s)].reward).abs())
        .fold(0.0, f64::max)
}

/// Per-state maximum reward.
fn state_maxima(mdp: &Mdp, r: &[f64]) -> Vec<f64> {
    (0..mdp.n())
        .map(|s| {
            mdp.state_actions(s)
                .iter()
                .map(|&a| r[a])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// One stochastic balancing update:
/// `r(a) <- r(a) - R(st(a)) + gamma * E_est[R(s')]`.
pub fn balance_round(mdp: &Mdp, rewards: &mut [f64], est: &impl TransitionEstimate) {
    let g = mdp.gamma();
    let big_r = state_maxima(mdp, rewards);
    for (a, act) in mdp.actions().iter().enumerate() {
        rewards[a] += -big_r[act.state] + g * est.expect(mdp, a, &big_r);
    }
}

/// Optional ground-truth tracking of the optimal-action gap.
struct GapTracker {
    optimal: Option<Policy>,
}

impl GapTracker {
    fn new(mdp: &Mdp, track: bool) -> Result<Self> {
        let optimal = if track { Some(solve_optimal(mdp)?.0) } else { None };
        Ok(Self { optimal })
    }

    fn gap(&self, mdp: &Mdp, policy: &Policy) -> Option<f64> {
        self.optimal.as_ref().map(|o| optimal_action_gap(mdp, o, policy))
    }
}

fn draw(model: &GenerativeModel, sampling: Sampling, round: usize) -> Result<Option<EmpiricalTransitions>> {
    match sampling {
        Sampling::Exact => Ok(None),
        Sampling::Generative { workers: 1, k } => sample_empirical(model, k, round as u64).map(Some),
        Sampling::Generative { workers, k } => sample_federated(model, workers, k, round as u64).map(Some),
        Sampling::Pooled { workers, k } => sample_pooled_sequential(model, workers, k, round as u64).map(Some),
    }
}

/// Stochastic reward balancing on the shifted MDP. With `track_gap` each round
/// also records the optimal-action gap against a policy-iteration oracle run
/// on the hidden MDP.
pub fn stochastic_rbs(
    model: &GenerativeModel,
    sampling: Sampling,
    stopping: Stopping,
    track_gap: bool,
) -> Result<StochasticOutcome> {
    let mdp = &model.mdp;
    let g = mdp.gamma();
    if let Stopping::Observable { epsilon, .. } = stopping {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
    }
    if let Sampling::Generative { workers, k } | Sampling::Pooled { workers, k } = sampling {
        if workers == 0 || k == 0 {
            return Err(Error::InvalidParameter("workers and k must be at least 1".into()));
        }
    }
    let tracker = GapTracker::new(mdp, track_gap)?;
    let shift = mdp.max_reward();
    let mut rewards: Vec<f64> = mdp.rewards().iter().map(|r| r - shift).collect();
    let start = Instant::now();
    let mut r_min = min_of_state_max(mdp, &rewards, None);
    let mut trace = vec![RoundRecord {
        round: 0,
        r_min_of_max: Some(r_min),
        metric_gap: tracker.gap(mdp, &Policy::argmax_reward(mdp, &rewards)),
        wallclock_ns: 0,
    }];
    let mut t = 0;
    while t < stopping.cap() && !stopping.done(r_min, g) {
        match draw(model, sampling, t)? {
            None => balance_round(mdp, &mut rewards, &ExactTransitions),
            Some(est) => balance_round(mdp, &mut rewards, &est),
        }
        t += 1;
        r_min = min_of_state_max(mdp, &rewards, None);
        trace.push(RoundRecord {
            round: t,
            r_min_of_max: Some(r_min),
            metric_gap: tracker.gap(mdp, &Policy::argmax_reward(mdp, &rewards)),
            wallclock_ns: start.elapsed().as_nanos(),
        });
    }
    Ok(StochasticOutcome {
        policy: Policy::argmax_reward(mdp, &rewards),
        rewards,
        rounds: t,
        trace,
    })
}

/// `workers` workers with `k_per_worker` samples each, pooled into one update
/// per communication round.
pub fn federated_rbs(
    model: &GenerativeModel,
    workers: u64,
    k_per_worker: u64,
    stopping: Stopping,
    track_gap: bool,
) -> Result<StochasticOutcome> {
    stochastic_rbs(model, Sampling::Generative { workers, k: k_per_worker }, stopping, track_gap)
}

/// Sample size `k` and round count `t` that make stochastic reward balancing
/// `epsilon`-optimal with probability `tau`:
/// `k = 4 r^2 log(2m / (1 - tau)) / (eps^2 (1 - gamma)^3 (1 + gamma))` and
/// `t = log(1 / (eps (1 - gamma))) / (1 - gamma)`, both rounded up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub k: u64,
    pub t: usize,
}

pub fn plan_samples(epsilon: f64, tau: f64, gamma: f64, r_max: f64, m: usize) -> Result<SamplePlan> {
    if !(epsilon > 0.0) || !(tau > 0.0 && tau < 1.0) || !(0.0..1.0).contains(&gamma) || r_max < 0.0 || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad sample plan inputs: epsilon={epsilon} tau={tau} gamma={gamma} r_max={r_max} m={m}"
        )));
    }
    let one_g = 1.0 - gamma;
    let k = 4.0 * r_max * r_max * (2.0 * m as f64 / (1.0 - tau)).ln()
        / (epsilon * epsilon * one_g.powi(3) * (1.0 + gamma));
    let t = (1.0 / (epsilon * one_g)).ln() / one_g;
    Ok(SamplePlan {
        k: (k.ceil() as u64).max(1),
        t: t.ceil().max(0.0) as usize,
    })
}

/// Default Q-learning step size `1 / (1 + (1 - gamma) t)`.
pub fn default_learning_rate(gamma: f64) -> impl Fn(usize) -> f64 {
    move |t| 1.0 / (1.0 + (1.0 - gamma) * t as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QOutcome {
    pub q: Vec<f64>,
    pub policy: Policy,
    pub trace: Vec<RoundRecord>,
}

/// Synchronous Q-learning from `Q = 0` on the original rewards:
/// `Q(a) <- (1 - lr) Q(a) + lr (r(a) + gamma * E_est[max_b Q(b)])`.
pub fn synchronous_q_learning(
    model: &GenerativeModel,
    sampling: Sampling,
    rounds: usize,
    lr: impl Fn(usize) -> f64,
    track_gap: bool,
) -> Result<QOutcome> {
    let mdp = &model.mdp;
    let g = mdp.gamma();
    let tracker = GapTracker::new(mdp, track_gap)?;
    let rewards = mdp.rewards();
    let mut q = vec![0.0; mdp.num_actions()];
    let start = Instant::now();
    let mut trace = vec![RoundRecord {
        round: 0,
        r_min_of_max: None,
        metric_gap: tracker.gap(mdp, &Policy::argmax_reward(mdp, &q)),
        wallclock_ns: 0,
    }];
    for t in 0..rounds {
        let alpha = lr(t);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("learning rate {alpha} at round {t} outside (0, 1]")));
        }
        let v = state_maxima(mdp, &q);
        let est = draw(model, sampling, t)?;
        for a in 0..q.len() {
            let next = match &est {
                None => ExactTransitions.expect(mdp, a, &v),
                Some(e) => e.expect(mdp, a, &v),
            };
            q[a] = (1.0 - alpha) * q[a] + alpha * (rewards[a] + g * next);
        }
        trace.push(RoundRecord {
            round: t + 1,
            r_min_of_max: None,
            metric_gap: tracker.gap(mdp, &Policy::argmax_reward(mdp, &q)),
            wallclock_ns: start.elapsed().as_nanos(),
        });
    }
    Ok(QOutcome {
        policy: Policy::argmax_reward(mdp, &q),
        q,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Action;

    fn coin(seed: u64) -> GenerativeModel {
        let mdp = Mdp::new(2, 0.9, vec![
            Action::new(0, 0.0, vec![(0, 0.5), (1, 0.5)]),
            Action::new(1, -1.0, vec![(0, 1.0)]),
        ])
        .unwrap();
        GenerativeModel::new(mdp, seed)
    }

    #[test]
    fn deterministic_action_gives_unit_mass() {
        let m = coin(3);
        for k in [1, 7, 1000] {
            let e = sample_empirical(&m, k, 0).unwrap();
            assert_eq!(e.counts[1], vec![k]);
            assert_eq!(e.frequencies(1), vec![1.0]);
        }
    }

    #[test]
    fn fair_coin_concentrates() {
        let m = coin(11);
        let e = sample_empirical(&m, 10_000, 0).unwrap();
        let f = e.frequencies(0);
        assert!((f[0] - 0.5).abs() < 0.02 && (f[1] - 0.5).abs() < 0.02, "{f:?}");
        assert_eq!(f.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = coin(5);
        assert_eq!(sample_empirical(&m, 50, 4).unwrap(), sample_empirical(&m, 50, 4).unwrap());
        assert_eq!(sample_empirical(&m, 0, 0).unwrap_err().to_string(), Error::InvalidParameter("k must be at least 1".into()).to_string());
    }

    #[test]
    fn single_self_loop_halves_each_round() {
        let mdp = Mdp::new(1, 0.5, vec![Action::new(0, -1.0, vec![(0, 1.0)])]).unwrap();
        let model = GenerativeModel::new(mdp, 0);
        // shifting removes the constant; exercise the update directly instead
        let mut r = vec![-1.0];
        for t in 1..=10 {
            balance_round(&model.mdp, &mut r, &sample_empirical(&model, 3, t).unwrap());
            assert_eq!(r[0], -(0.5f64.powi(t as i32)));
        }
    }

    #[test]
    fn exact_sampling_matches_plain_rbs_without_loops() {
        let mdp = Mdp::new(3, 0.8, vec![
            Action::new(0, -1.0, vec![(1, 0.4), (2, 0.6)]),
            Action::new(0, -0.2, vec![(2, 1.0)]),
            Action::new(1, -0.5, vec![(0, 1.0)]),
            Action::new(2, -2.0, vec![(0, 0.5), (1, 0.5)]),
            Action::new(2, -0.9, vec![(1, 1.0)]),
        ])
        .unwrap();
        let mut balancer = crate::balance::RewardBalancer::without_shift(&mdp).unwrap();
        let mut r = mdp.rewards();
        for _ in 0..20 {
            balancer.step();
            balance_round(&mdp, &mut r, &ExactTransitions);
            for (x, y) in r.iter().zip(balancer.rewards()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plan_examples() {
        let p = plan_samples(0.1, 0.1, 0.9, 1.0, 100).unwrap();
        assert_eq!(p.t, 47);
        assert!((p.k as f64 - 1_137_694.0).abs() < 100.0, "{}", p.k);
        assert_eq!(plan_samples(0.1, 0.1, 0.9, 0.0, 100).unwrap().k, 1);
        let k95 = plan_samples(0.1, 0.1, 0.95, 1.0, 100).unwrap().k;
        assert!(k95 > p.k);
        assert!(plan_samples(0.0, 0.1, 0.9, 1.0, 10).is_err());
        assert!(plan_samples(0.1, 1.0, 0.9, 1.0, 10).is_err());
    }

    #[test]
    fn one_worker_federated_equals_single() {
        let m = coin(9);
        let a = stochastic_rbs(&m, Sampling::Generative { workers: 1, k: 20 }, Stopping::Fixed(15), false).unwrap();
        let b = federated_rbs(&m, 1, 20, Stopping::Fixed(15), false).unwrap();
        assert_eq!(a.rewards, b.rewards);
    }

    #[test]
    fn pooling_matches_sequential_draw() {
        let m = coin(21);
        for round in 0..5 {
            assert_eq!(
                sample_federated(&m, 4, 25, round).unwrap(),
                sample_pooled_sequential(&m, 4, 25, round).unwrap()
            );
        }
    }

    #[test]
    fn action_gap_examples() {
        let mdp = Mdp::new(1, 0.5, vec![
            Action::new(0, 0.0, vec![(0, 1.0)]),
            Action::new(0, -1.0, vec![(0, 1.0)]),
        ])
        .unwrap();
        let opt = Policy::new(vec![0]);
        assert_eq!(optimal_action_gap(&mdp, &opt, &opt), 0.0);
        assert_eq!(optimal_action_gap(&mdp, &opt, &Policy::new(vec![1])), 1.0);
    }

    #[test]
    fn q_learning_geometric_series() {
        let mdp = Mdp::new(1, 0.5, vec![Action::new(0, 1.0, vec![(0, 1.0)])]).unwrap();
        let model = GenerativeModel::new(mdp, 0);
        let out = synchronous_q_learning(&model, Sampling::Exact, 60, |_| 1.0, false).unwrap();
        assert!((out.q[0] - 2.0).abs() < 1e-12);
        assert!(synchronous_q_learning(&model, Sampling::Exact, 3, |_| 0.0, false).is_err());
    }

    #[test]
    fn observable_stopping_halts_before_cap() {
        let m = coin(2);
        let out = stochastic_rbs(&m, Sampling::Exact, Stopping::Observable { epsilon: 0.1, cap: 10_000 }, true).unwrap();
        assert!(out.rounds < 10_000);
        let last = out.trace.last().unwrap();
        assert!(last.r_min_of_max.unwrap().abs() / 0.1 < 0.1);
        assert_eq!(last.metric_gap, Some(0.0));
        assert!(rounds_to_csv(&out.trace).starts_with("round,rminofmax,metric_gap,wallclock_ns\n0,"));
    }
}

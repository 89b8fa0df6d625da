//! Seeded benchmark families.
//!
//! Every action has an intended destination. Its transition mass is split
//! between that destination (`exec`), a spread over all of the state's
//! destinations (`random`) and the state itself (`self_loop`). The random mass
//! is distributed with weights proportional to `exp(-i)` over the state's
//! destinations, taken in a seeded order fixed per state.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mdp::{Action, Mdp};
use crate::rng::stream;
use crate::PROB_SUM_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub exec: f64,
    pub random: f64,
    pub self_loop: f64,
}

impl MixParams {
    pub fn new(exec: f64, random: f64, self_loop: f64) -> Result<Self> {
        let m = Self { exec, random, self_loop };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let parts = [self.exec, self.random, self.self_loop];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mix probabilities must lie in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

const LANE_RANDOM: u64 = 1;
const LANE_GRID: u64 = 2;
const LANE_CYCLE: u64 = 3;
const LANE_HIERARCHY: u64 = 4;

const GRID_NOISE: f64 = 0.05;
const CYCLE_NOISE: f64 = 0.05;

/// How the random mass is spread, recorded in each generator's meta block.
pub const RANDOM_MASS_CONVENTION: &str = "weights exp(-i) over the state's destinations in a seeded order";

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Normalised `exp(-i)` weights assigned to `dests` in a shuffled order.
fn spread_weights(rng: &mut ChaCha8Rng, dests: &[usize]) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = dests.to_vec();
    order.shuffle(rng);
    let raw: Vec<f64> = (0..order.len()).map(|i| (-(i as f64)).exp()).collect();
    let total: f64 = raw.iter().sum();
    order.into_iter().zip(raw).map(|(d, w)| (d, w / total)).collect()
}

/// Transitions for an action of `state` aimed at `target`.
fn mixed(state: usize, target: usize, spread: &[(usize, f64)], mix: &MixParams) -> Vec<(usize, f64)> {
    let mut probs: BTreeMap<usize, f64> = BTreeMap::new();
    *probs.entry(target).or_default() += mix.exec;
    for &(d, w) in spread {
        *probs.entry(d).or_default() += mix.random * w;
    }
    *probs.entry(state).or_default() += mix.self_loop;
    probs.into_iter().filter(|&(_, p)| p > 0.0).collect()
}

/// One action per destination, each rewarded `reward(rng, dest)`.
fn build_state(
    rng: &mut ChaCha8Rng,
    state: usize,
    dests: &[usize],
    mix: &MixParams,
    mut reward: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Vec<Action> {
    let spread = spread_weights(rng, dests);
    dests
        .iter()
        .map(|&d| Action::new(state, reward(rng), mixed(state, d, &spread, mix)))
        .collect()
}

/// Random MDP: each state gets 1 to 4 distinct destinations (never itself),
/// one action per destination, and reward `U(0, 3)` per state plus `U(-0.5,
/// 0.5)` per action.
pub fn random_mdp(n: usize, seed: u64, mix: MixParams, gamma: f64) -> Result<Mdp> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("random MDP needs n >= 2, got {n}")));
    }
    mix.check()?;
    check_gamma(gamma)?;
    let mut rng = stream(seed, LANE_RANDOM, 0);
    let mut actions = Vec::new();
    for s in 0..n {
        let d = rng.random_range(1..=4.min(n - 1));
        let dests: Vec<usize> = index::sample(&mut rng, n - 1, d)
            .into_iter()
            .map(|i| if i >= s { i + 1 } else { i })
            .collect();
        let base = rng.random_range(0.0..3.0);
        actions.extend(build_state(&mut rng, s, &dests, &mix, |r| base + r.random_range(-0.5..0.5)));
    }
    Mdp::new(n, gamma, actions)
}

/// Grid world with cell `(r, c)` at id `r * cols + c`. Actions move up, left,
/// down or right when the move stays on the grid. Reward is `0.1 (r + c)` plus
/// `U(-0.05, 0.05)` noise.
pub fn grid_world(rows: usize, cols: usize, mix: MixParams, gamma: f64, seed: u64) -> Result<Mdp> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter(format!("grid needs at least 2x2 cells, got {rows}x{cols}")));
    }
    mix.check()?;
    check_gamma(gamma)?;
    let mut rng = stream(seed, LANE_GRID, 0);
    let mut actions = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let s = r * cols + c;
            let mut dests = Vec::with_capacity(4);
            if r > 0 {
                dests.push(s - cols);
            }
            if c > 0 {
                dests.push(s - 1);
            }
            if r + 1 < rows {
                dests.push(s + cols);
            }
            if c + 1 < cols {
                dests.push(s + 1);
            }
            let base = 0.1 * (r + c) as f64;
            actions.extend(build_state(&mut rng, s, &dests, &mix, |g| base + g.random_range(-GRID_NOISE..GRID_NOISE)));
        }
    }
    Mdp::new(rows * cols, gamma, actions)
}

/// Cycle: each state has actions jumping 1, 2 and 3 states ahead (mod `n`);
/// reward is `0.1 s` plus `U(-0.05, 0.05)` noise.
pub fn cycle_mdp(n: usize, mix: MixParams, gamma: f64, seed: u64) -> Result<Mdp> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!("cycle needs n >= 4, got {n}")));
    }
    mix.check()?;
    check_gamma(gamma)?;
    let mut rng = stream(seed, LANE_CYCLE, 0);
    let mut actions = Vec::new();
    for s in 0..n {
        let dests = [(s + 1) % n, (s + 2) % n, (s + 3) % n];
        let base = 0.1 * s as f64;
        actions.extend(build_state(&mut rng, s, &dests, &mix, |g| base + g.random_range(-CYCLE_NOISE..CYCLE_NOISE)));
    }
    Mdp::new(n, gamma, actions)
}

/// MDP layered into classes `1..=classes`. Class 1 states only loop on
/// themselves. In higher classes every action keeps a self-loop of
/// probability `U[0.1, 0.5]` and spreads the rest uniformly over 1 to 3
/// states of lower classes. Returns the MDP and the class of each state.
pub fn hierarchical_mdp(classes: usize, states_per_class: usize, seed: u64, gamma: f64) -> Result<(Mdp, Vec<usize>)> {
    if classes == 0 || states_per_class == 0 {
        return Err(Error::InvalidParameter("need at least one class and one state per class".into()));
    }
    check_gamma(gamma)?;
    let mut rng = stream(seed, LANE_HIERARCHY, 0);
    let n = classes * states_per_class;
    let labels: Vec<usize> = (0..n).map(|s| s / states_per_class + 1).collect();
    let mut actions = Vec::new();
    for s in 0..n {
        let lower = (labels[s] - 1) * states_per_class;
        for _ in 0..rng.random_range(1..=3) {
            let reward = rng.random_range(0.0..3.0);
            if lower == 0 {
                actions.push(Action::new(s, reward, vec![(s, 1.0)]));
                continue;
            }
            let p_self = rng.random_range(0.1..=0.5);
            let count = rng.random_range(1..=3.min(lower));
            let dests = index::sample(&mut rng, lower, count);
            let share = (1.0 - p_self) / dests.len() as f64;
            let mut t: Vec<(usize, f64)> = dests.into_iter().map(|d| (d, share)).collect();
            t.sort_unstable_by_key(|&(d, _)| d);
            t.push((s, p_self));
            actions.push(Action::new(s, reward, t));
        }
    }
    Ok((Mdp::new(n, gamma, actions)?, labels))
}

/// Meta block embedded in generated JSON files.
pub fn meta(generator: &str, params: Value, seed: u64) -> Value {
    json!({
        "generator": generator,
        "params": params,
        "seed": seed,
        "random_mass": RANDOM_MASS_CONVENTION,
    })
}

/// Mean BFS distance over all ordered pairs of distinct, mutually reachable
/// states in the transition support graph.
pub fn average_shortest_path(mdp: &Mdp) -> f64 {
    let n = mdp.n();
    let mut adj = vec![Vec::new(); n];
    for a in mdp.actions() {
        for &(d, p) in &a.transitions {
            if p > 0.0 && d != a.state {
                adj[a.state].push(d);
            }
        }
    }
    let (mut total, mut pairs) = (0usize, 0usize);
    for src in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (t, &d) in dist.iter().enumerate() {
            if t != src && d != usize::MAX {
                total += d;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total as f64 / pairs as f64
    }
}

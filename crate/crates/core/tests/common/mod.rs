//! Seeded MDP corpora shared by the integration tests.
#![allow(dead_code)]

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rbsolve::{Action, Mdp, Policy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector over `support` with a positive entry on each.
fn spread(r: &mut ChaCha8Rng, support: &[usize]) -> Vec<(usize, f64)> {
    let w: Vec<f64> = support.iter().map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut t: Vec<(usize, f64)> = support.iter().zip(&w).map(|(&s, &x)| (s, x / total)).collect();
    t.sort_unstable_by_key(|p| p.0);
    t
}

/// Small unstructured MDP: 2 to 8 states, 1 to 4 actions per state, arbitrary
/// supports (self-loops allowed), rewards in [-5, 5].
pub fn small_mdp(seed: u64) -> Mdp {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let gamma = [0.5, 0.8, 0.9, 0.95][r.random_range(0..4)];
    let mut actions = Vec::new();
    for s in 0..n {
        for _ in 0..r.random_range(1..=4) {
            let k = r.random_range(1..=n);
            let support = index::sample(&mut r, n, k).into_vec();
            let t = spread(&mut r, &support);
            actions.push(Action::new(s, r.random_range(-5.0..5.0), t));
        }
    }
    Mdp::new(n, gamma, actions).unwrap()
}

/// Like [`small_mdp`] but every action has an explicit self-loop probability
/// drawn from [0, 0.9] and the given discount.
pub fn self_loop_mdp(seed: u64, gamma: f64) -> Mdp {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let mut actions = Vec::new();
    for s in 0..n {
        for _ in 0..r.random_range(1..=4) {
            let p_self = r.random_range(0.0..0.9);
            let others: Vec<usize> = (0..n).filter(|&d| d != s).collect();
            let k = r.random_range(1..=others.len());
            let picked: Vec<usize> = index::sample(&mut r, others.len(), k).into_iter().map(|i| others[i]).collect();
            let mut t: Vec<(usize, f64)> = spread(&mut r, &picked).into_iter().map(|(d, p)| (d, p * (1.0 - p_self))).collect();
            t.push((s, p_self));
            t.sort_unstable_by_key(|p| p.0);
            actions.push(Action::new(s, r.random_range(-5.0..5.0), t));
        }
    }
    Mdp::new(n, gamma, actions).unwrap()
}

/// No self-loop mass anywhere and nonpositive rewards.
pub fn diagonal_free_mdp(seed: u64) -> Mdp {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let gamma = [0.5, 0.8, 0.9, 0.95][r.random_range(0..4)];
    let mut actions = Vec::new();
    for s in 0..n {
        for _ in 0..r.random_range(1..=4) {
            let others: Vec<usize> = (0..n).filter(|&d| d != s).collect();
            let k = r.random_range(1..=others.len());
            let picked: Vec<usize> = index::sample(&mut r, others.len(), k).into_iter().map(|i| others[i]).collect();
            actions.push(Action::new(s, r.random_range(-5.0..0.0), spread(&mut r, &picked)));
        }
    }
    Mdp::new(n, gamma, actions).unwrap()
}

pub fn random_policy(mdp: &Mdp, r: &mut ChaCha8Rng) -> Policy {
    Policy::new(
        (0..mdp.n())
            .map(|s| {
                let acts = mdp.state_actions(s);
                acts[r.random_range(0..acts.len())]
            })
            .collect(),
    )
}

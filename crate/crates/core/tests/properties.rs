//! Randomized invariants over small unstructured MDPs.

mod common;

use proptest::prelude::*;
use rbsolve::balance::rbs_solve;
use rbsolve::exact::{exact_reward_balancing, solve_optimal};
use rbsolve::geometry::{apply_delta, is_normal, normalize};
use rbsolve::mdp::{advantage, evaluate_policy, policy_suboptimality};
use rand::Rng;

use common::{random_policy, rng, small_mdp};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transformations_preserve_every_advantage(seed in any::<u64>()) {
        let mdp = small_mdp(seed);
        let mut r = rng(seed ^ 0x5eed);
        let delta: Vec<f64> = (0..mdp.n()).map(|_| r.random_range(-10.0..10.0)).collect();
        let moved = apply_delta(&mdp, &delta).unwrap();
        let pi = random_policy(&mdp, &mut r);
        let v = evaluate_policy(&mdp, &pi).unwrap();
        let w = evaluate_policy(&moved, &pi).unwrap();
        for s in 0..mdp.n() {
            prop_assert!((w[s] - v[s] - delta[s]).abs() < 1e-7);
        }
        for a in 0..mdp.num_actions() {
            let before = advantage(&mdp, &v, a).unwrap();
            let after = advantage(&moved, &w, a).unwrap();
            prop_assert!((before - after).abs() < 1e-7);
        }
    }

    #[test]
    fn normalization_zeroes_optimal_values(seed in any::<u64>()) {
        let mdp = small_mdp(seed);
        let norm = normalize(&mdp).unwrap();
        prop_assert!(is_normal(&norm.mdp, 1e-7).unwrap());
    }

    #[test]
    fn exact_balancing_finds_an_optimal_policy(seed in any::<u64>()) {
        let mdp = small_mdp(seed);
        let (_, v_star) = solve_optimal(&mdp).unwrap();
        let out = exact_reward_balancing(&mdp).unwrap();
        prop_assert!(policy_suboptimality(&mdp, &out.policy, &v_star).unwrap() < 1e-7);
    }

    #[test]
    fn safe_balancing_meets_its_epsilon(seed in any::<u64>(), eps in 0.01f64..1.0) {
        let mdp = small_mdp(seed);
        let (_, v_star) = solve_optimal(&mdp).unwrap();
        let out = rbs_solve(&mdp, eps, 1_000_000).unwrap();
        prop_assert!(policy_suboptimality(&mdp, &out.policy, &v_star).unwrap() < eps);
    }
}

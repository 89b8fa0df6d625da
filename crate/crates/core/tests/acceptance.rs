//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and budgets are pinned below.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rbsolve::balance::{
    check_diagonal_free_equivalence, rbs_bound_params, rbs_epsilon_bound, rbs_with_filtering, reward_advantage_bound,
    RewardBalancer,
};
use rbsolve::exact::{argmax_reward_policy, exact_reward_balancing, policy_iteration, solve_optimal};
use rbsolve::experiment::{
    build, known_counts, known_points, run_known, shifted_r_max, Family, KnownExperiment, KnownSolver, Metric, Row,
};
use rbsolve::generators::{hierarchical_mdp, random_mdp, MixParams};
use rbsolve::geometry::{apply_delta, hyperplane_normal, normalize, selfloop_intersection_values};
use rbsolve::mdp::{advantage, evaluate_policy, policy_suboptimality};
use rbsolve::stochastic::{
    balance_round, plan_samples, sample_empirical, sample_federated, sample_pooled_sequential, stochastic_rbs,
    GenerativeModel, Sampling, Stopping,
};
use rbsolve::{Mdp, Policy};

use common::{diagonal_free_mdp, random_policy, rng, self_loop_mdp, small_mdp};

const ADVANTAGE_TOL: f64 = 1e-9;
const NORMAL_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-9;
const HIERARCHY_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-9;
const EQUIVALENCE_TOL: f64 = 1e-9;
const STOCH_SLACK: f64 = 1e-12;
const FEDERATED_TOL: f64 = 1e-12;
const FIGURE_GAP: f64 = 1.0;

const FAST_BUDGET: Duration = Duration::from_secs(5);
const SLOW_BUDGET: Duration = Duration::from_secs(120);

const MASTER_SEED: u64 = 20_240_501;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check { pass, detail: detail.into() }
}

fn advantage_preservation() -> Check {
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        let mdp = small_mdp(seed);
        let mut r = rng(1_000 + seed);
        for _ in 0..50 {
            let policy = random_policy(&mdp, &mut r);
            let a = r.random_range(0..mdp.num_actions());
            let delta: Vec<f64> = (0..mdp.n()).map(|_| r.random_range(-10.0..10.0)).collect();
            let moved = apply_delta(&mdp, &delta).unwrap();
            let before = advantage(&mdp, &evaluate_policy(&mdp, &policy).unwrap(), a).unwrap();
            let after = advantage(&moved, &evaluate_policy(&moved, &policy).unwrap(), a).unwrap();
            worst = worst.max((before - after).abs());
        }
    }
    check(worst <= ADVANTAGE_TOL, format!("max |change in advantage| = {worst:.2e} over 5000 pairs"))
}

fn normalization() -> Check {
    let (mut worst_max, mut worst_v, mut mismatches) = (0.0_f64, 0.0_f64, 0);
    for seed in 0..100 {
        let mdp = small_mdp(seed);
        let norm = normalize(&mdp).unwrap();
        for s in 0..mdp.n() {
            let m = norm.mdp.state_actions(s).iter().map(|&a| norm.mdp.actions()[a].reward).fold(f64::NEG_INFINITY, f64::max);
            worst_max = worst_max.max(m.abs());
        }
        if argmax_reward_policy(&norm.mdp) != norm.optimal_policy {
            mismatches += 1;
        }
        let (_, v) = solve_optimal(&norm.mdp).unwrap();
        worst_v = worst_v.max(v.inf_norm());
    }
    check(
        worst_max <= NORMAL_TOL && worst_v <= NORMAL_TOL && mismatches == 0,
        format!("max |state max reward| = {worst_max:.2e}, max |V*| = {worst_v:.2e}, policy mismatches = {mismatches}"),
    )
}

fn hyperplane_round_trip() -> Check {
    let mut worst = 0.0_f64;
    for i in 0..500 {
        let mdp = small_mdp(10_000 + i);
        let policy = random_policy(&mdp, &mut rng(20_000 + i));
        let normal = hyperplane_normal(&mdp, &policy).unwrap();
        let v = selfloop_intersection_values(&normal, mdp.gamma()).unwrap();
        worst = worst.max(v.max_abs_diff(&evaluate_policy(&mdp, &policy).unwrap()));
    }
    check(worst <= ROUND_TRIP_TOL, format!("max value error = {worst:.2e} over 500 pairs"))
}

fn hierarchical_convergence() -> Check {
    let mut failures = Vec::new();
    let mut slowest = 0.0_f64;
    for classes in 1..=6 {
        for seed in 0..20 {
            let (mdp, _) = hierarchical_mdp(classes, 4, seed, 0.9).unwrap();
            let mut rb = RewardBalancer::new(&mdp);
            let mut reached = rb.r_min().abs() <= HIERARCHY_TOL;
            while !reached && rb.iteration() < classes {
                rb.step();
                reached = rb.r_min().abs() <= HIERARCHY_TOL;
            }
            if !reached {
                failures.push((classes, seed));
            }
            slowest = slowest.max(rb.iteration() as f64 / classes as f64);
        }
    }
    check(
        failures.is_empty(),
        format!("120 runs, failures (classes, seed) = {failures:?}, max t/C = {slowest:.2}"),
    )
}

const BOUND_GAMMAS: [f64; 3] = [0.8, 0.9, 0.95];
const BOUND_MAX_ITERS: usize = 400;

fn bound_corpus() -> impl Iterator<Item = Mdp> {
    (0..100).map(|seed| self_loop_mdp(50_000 + seed, BOUND_GAMMAS[seed as usize % 3]))
}

fn epsilon_bound() -> Check {
    let (mut violations, mut checked, mut worst_ratio) = (0usize, 0usize, 0.0_f64);
    for mdp in bound_corpus() {
        let params = rbs_bound_params(&mdp);
        let (_, v_star) = solve_optimal(&mdp).unwrap();
        let mut rb = RewardBalancer::new(&mdp);
        loop {
            let t = rb.iteration();
            let bound = rbs_epsilon_bound(&params, mdp.gamma(), t);
            let sub = policy_suboptimality(&mdp, &rb.policy(), &v_star).unwrap();
            checked += 1;
            if sub > bound + BOUND_SLACK {
                violations += 1;
            }
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(sub / bound);
            }
            if t >= BOUND_MAX_ITERS || bound < 1e-9 {
                break;
            }
            rb.step();
        }
    }
    check(
        violations == 0,
        format!("{checked} iterations checked, {violations} violations, max suboptimality/bound = {worst_ratio:.3}"),
    )
}

fn advantage_bound() -> Check {
    let (mut violations, mut checked, mut worst_ratio) = (0usize, 0usize, 0.0_f64);
    let mut first = None;
    for (i, mdp) in bound_corpus().enumerate() {
        let (_, v_star) = solve_optimal(&mdp).unwrap();
        let adv: Vec<f64> = (0..mdp.num_actions()).map(|a| advantage(&mdp, &v_star, a).unwrap()).collect();
        let mut rb = RewardBalancer::new(&mdp);
        let r_max = rb.r_max();
        loop {
            let t = rb.iteration();
            let bound = reward_advantage_bound(r_max, mdp.gamma(), t);
            for (a, (&r, &ad)) in rb.rewards().iter().zip(&adv).enumerate() {
                let gap = (r - ad).abs();
                checked += 1;
                if gap > bound + BOUND_SLACK {
                    violations += 1;
                    first.get_or_insert((i, t, a, gap, bound));
                }
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(gap / bound);
                }
            }
            if t >= BOUND_MAX_ITERS || bound < 1e-9 {
                break;
            }
            rb.step();
        }
    }
    let first = first.map(|(i, t, a, g, b)| format!(", first: mdp {i} t={t} action {a} gap {g:.4} > {b:.4}")).unwrap_or_default();
    check(
        violations == 0,
        format!("{checked} (action, iteration) pairs, {violations} violations, max gap/bound = {worst_ratio:.3}{first}"),
    )
}

fn erb_matches_pi() -> Check {
    let mut mismatches = Vec::new();
    let mut total_steps = 0;
    for seed in 0..100 {
        let mdp = small_mdp(70_000 + seed);
        let pi = policy_iteration(&mdp, &argmax_reward_policy(&mdp)).unwrap();
        let erb = exact_reward_balancing(&mdp).unwrap();
        let a: Vec<&Policy> = pi.trace.policies();
        let b: Vec<&Policy> = erb.trace.policies();
        total_steps += a.len();
        if a != b {
            mismatches.push(seed);
        }
    }
    check(
        mismatches.is_empty(),
        format!("100 MDPs, {total_steps} policies compared, mismatching seeds = {mismatches:?}"),
    )
}

fn diagonal_free() -> Check {
    let (mut failures, mut worst) = (0, 0.0_f64);
    for seed in 0..50 {
        let mdp = diagonal_free_mdp(80_000 + seed);
        let report = check_diagonal_free_equivalence(&mdp, 30).unwrap();
        worst = worst.max(report.max_gap());
        if !report.holds(EQUIVALENCE_TOL) {
            failures += 1;
        }
    }
    check(failures == 0, format!("50 MDPs x 30 steps, failures = {failures}, max ||D_t + V_t|| = {worst:.2e}"))
}

fn filtering() -> Check {
    let (mut wrong, mut inexact, mut lost_optimal, mut iters) = (0, 0, 0, 0);
    for seed in 0..100 {
        let mdp = small_mdp(90_000 + seed);
        let (opt, _) = solve_optimal(&mdp).unwrap();
        let out = rbs_with_filtering(&mdp, 100_000).unwrap();
        iters += out.trace.len();
        if !out.exact {
            inexact += 1;
        }
        if out.policy != opt {
            wrong += 1;
        }
        if (0..mdp.n()).any(|s| !out.filter.alive[s].contains(&opt.action(s))) {
            lost_optimal += 1;
        }
    }
    check(
        wrong == 0 && inexact == 0 && lost_optimal == 0,
        format!("100 MDPs, wrong policy = {wrong}, unresolved = {inexact}, optimal action filtered = {lost_optimal}, mean iterations = {:.1}", iters as f64 / 100.0),
    )
}

fn stochastic_invariants() -> Check {
    let mix = MixParams::new(0.5, 0.25, 0.25).unwrap();
    let (mut positive, mut contraction, mut rounds) = (0, 0, 0);
    for seed in 0..50 {
        let mdp = random_mdp(20, 100 + seed, mix, 0.9).unwrap();
        let model = GenerativeModel::new(mdp.clone(), 200 + seed);
        let shift = mdp.max_reward();
        let mut r: Vec<f64> = mdp.rewards().iter().map(|x| x - shift).collect();
        let r_min = |r: &[f64]| {
            (0..mdp.n())
                .map(|s| mdp.state_actions(s).iter().map(|&a| r[a]).fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min)
        };
        let mut prev = r_min(&r);
        for t in 0..60 {
            balance_round(&mdp, &mut r, &sample_empirical(&model, 500, t).unwrap());
            rounds += 1;
            if r.iter().any(|&x| x > STOCH_SLACK) {
                positive += 1;
            }
            let cur = r_min(&r);
            if cur < mdp.gamma() * prev - STOCH_SLACK {
                contraction += 1;
            }
            prev = cur;
        }
    }
    check(
        positive == 0 && contraction == 0,
        format!("{rounds} rounds, positive-reward rounds = {positive}, contraction violations = {contraction}"),
    )
}

fn sample_complexity() -> Check {
    let (eps, tau, gamma) = (0.2, 0.2, 0.8);
    let mix = MixParams::new(0.5, 0.25, 0.25).unwrap();
    let trials = 50;
    let mut good = 0;
    let mut ks = Vec::new();
    for seed in 0..trials {
        let mdp = random_mdp(20, 300 + seed, mix, gamma).unwrap();
        let plan = plan_samples(eps, tau, gamma, shifted_r_max(&mdp), mdp.num_actions()).unwrap();
        ks.push(plan.k);
        let (_, v_star) = solve_optimal(&mdp).unwrap();
        let model = GenerativeModel::new(mdp, 400 + seed);
        let out = stochastic_rbs(&model, Sampling::Generative { workers: 1, k: plan.k }, Stopping::Fixed(plan.t), false).unwrap();
        if policy_suboptimality(&model.mdp, &out.policy, &v_star).unwrap() <= eps {
            good += 1;
        }
    }
    let rate = good as f64 / trials as f64;
    let (kmin, kmax) = (ks.iter().min().unwrap(), ks.iter().max().unwrap());
    check(rate >= 0.8, format!("{good}/{trials} trials eps-optimal ({:.0}%), planned k in [{kmin}, {kmax}]", rate * 100.0))
}

fn federated() -> Check {
    let mdp = random_mdp(20, 7, MixParams::new(0.5, 0.25, 0.25).unwrap(), 0.9).unwrap();
    let model = GenerativeModel::new(mdp, 11);
    let counts_equal = (0..30).all(|t| sample_federated(&model, 4, 25, t).unwrap() == sample_pooled_sequential(&model, 4, 25, t).unwrap());
    let fed = stochastic_rbs(&model, Sampling::Generative { workers: 4, k: 25 }, Stopping::Fixed(30), false).unwrap();
    let pooled = stochastic_rbs(&model, Sampling::Pooled { workers: 4, k: 25 }, Stopping::Fixed(30), false).unwrap();
    let diff = fed.rewards.iter().zip(&pooled.rewards).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    check(
        counts_equal && diff <= FEDERATED_TOL,
        format!("counts identical = {counts_equal}, max reward difference = {diff:.2e} after 30 rounds"),
    )
}

fn means(rows: &[Row], algo: &str) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.algo == algo).map(|r| (r.x, r.mean)).collect()
}

fn self_loop_sweep() -> Check {
    let rows = run_known(KnownExperiment::ExecProb, &[Family::Grid], Metric::Stopping, 20, MASTER_SEED).unwrap();
    // rows come in sweep order: execution 1.0 (no self-loops) down to 0.2
    let rbs = means(&rows, "rbs-grid");
    let vi = means(&rows, "vi-grid");
    let decreasing = rbs.windows(2).all(|w| w[1].1 < w[0].1);
    let point = known_points(KnownExperiment::ExecProb)[0];
    let a = known_counts(Family::Grid, &point, KnownSolver::Rbs, Metric::Stopping, 20, MASTER_SEED).unwrap();
    let b = known_counts(Family::Grid, &point, KnownSolver::Vi, Metric::Stopping, 20, MASTER_SEED).unwrap();
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(_, m)| format!("{m:.1}")).collect::<Vec<_>>().join(" ");
    check(
        decreasing && a == b,
        format!(
            "rbs means by self-loop 0..0.8: [{}], vi: [{}], per-rep counts equal at self-loop 0 = {}",
            fmt(&rbs),
            fmt(&vi),
            a == b
        ),
    )
}

fn gamma_and_size_sweeps() -> Check {
    let mut worst = 0.0_f64;
    let mut where_ = String::new();
    for exp in [KnownExperiment::GammaSweep, KnownExperiment::SizeSweep] {
        let rows = run_known(exp, &Family::ALL, Metric::Stopping, 20, MASTER_SEED).unwrap();
        for fam in Family::ALL {
            let rbs = means(&rows, &format!("rbs-{}", fam.name()));
            let vi = means(&rows, &format!("vi-{}", fam.name()));
            for ((x, r), (_, v)) in rbs.iter().zip(&vi) {
                let gap = (r - v).abs();
                if gap >= worst {
                    worst = gap;
                    where_ = format!("{exp:?} {} x={x}", fam.name());
                }
            }
        }
    }
    check(worst <= FIGURE_GAP, format!("max |mean rbs - mean vi| = {worst:.2} iterations (at {where_})"))
}

/// Sanity anchor for the sweep: instances build at every point.
fn sweep_instances_build() -> bool {
    known_points(KnownExperiment::SizeSweep)
        .iter()
        .all(|p| build(Family::Grid, p.n, p.mix, p.gamma, 0).is_ok())
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, fn() -> Check, Option<Duration>);
    let criteria: [Criterion; 14] = [
        (1, "advantage preservation", advantage_preservation, Some(FAST_BUDGET)),
        (2, "normalization", normalization, Some(FAST_BUDGET)),
        (3, "hyperplane value round trip", hyperplane_round_trip, None),
        (4, "hierarchical finite convergence", hierarchical_convergence, None),
        (5, "RB-S suboptimality bound", epsilon_bound, None),
        (6, "reward/advantage bound", advantage_bound, None),
        (7, "exact reward balancing matches policy iteration", erb_matches_pi, None),
        (8, "diagonal-free equivalence with value iteration", diagonal_free, None),
        (9, "action filtering", filtering, None),
        (10, "stochastic invariants", stochastic_invariants, None),
        (11, "planned sample size at desk scale", sample_complexity, Some(SLOW_BUDGET)),
        (12, "federated pooling identity", federated, None),
        (13, "self-loop sweep on grid world", self_loop_sweep, Some(SLOW_BUDGET)),
        (14, "gamma and size sweeps", gamma_and_size_sweeps, None),
    ];
    assert!(sweep_instances_build());
    let mut failed = Vec::new();
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let mut c = run();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                c.pass = false;
                c.detail.push_str(&format!("; over budget of {b:?}"));
            }
        }
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {} ({:.2}s)", c.detail, took.as_secs_f64());
        if !c.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 14 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

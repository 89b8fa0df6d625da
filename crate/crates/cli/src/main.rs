//! `rbsolve`: generate, solve and benchmark finite discounted MDPs.
//!
//! Data (MDP JSON, traces, experiment tables) goes to `--out` or stdout; the
//! human-readable report goes to stderr.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rbsolve::balance::{rbs_solve, rbs_with_filtering};
use rbsolve::exact::{
    argmax_reward_policy, exact_reward_balancing, policy_iteration, solve_optimal, value_iteration,
};
use rbsolve::experiment::{self, shifted_r_max, Experiment, Family, Metric};
use rbsolve::generators::{self, cycle_mdp, grid_world, hierarchical_mdp, random_mdp, MixParams};
use rbsolve::geometry::{certify_optimal, is_normal, normalize};
use rbsolve::io::{read_mdp, to_json};
use rbsolve::mdp::policy_suboptimality;
use rbsolve::plot::{line_chart, series_from_rows};
use rbsolve::stochastic::{
    default_learning_rate, optimal_action_gap, plan_samples, rounds_to_csv, stochastic_rbs, synchronous_q_learning,
    GenerativeModel, RoundRecord, Sampling, Stopping,
};
use rbsolve::{Mdp, Policy, SolverTrace, IDENTITY_TOL};

#[derive(Parser)]
#[command(name = "rbsolve", version, about = "Reward-balancing solvers for finite discounted MDPs")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file for the command's data; stdout if omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded benchmark MDP as JSON.
    Generate(GenerateArgs),
    /// Solve an MDP file with a known-model algorithm.
    Solve(SolveArgs),
    /// Rewrite an MDP so that all optimal values are zero.
    Normalize(NormalizeArgs),
    /// Solve an MDP file through its generative model only.
    Stoch(StochArgs),
    /// Run one of the comparison experiments.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Random,
    Grid,
    Cycle,
    Hierarchical,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    gamma: f64,
    /// State count (random, cycle).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Number of classes (hierarchical).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 5)]
    per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    exec: f64,
    #[arg(long, default_value_t = 0.0)]
    random: f64,
    #[arg(long = "self", default_value_t = 0.0)]
    self_loop: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveAlgo {
    Vi,
    Pi,
    Erb,
    Rbs,
    RbsFilter,
}

#[derive(clap::Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    algo: SolveAlgo,
    /// Target suboptimality for vi and rbs.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    /// Compare against a policy-iteration oracle; exits with status 5 if the
    /// result misses its guarantee.
    #[arg(long)]
    oracle: bool,
}

#[derive(clap::Args)]
struct NormalizeArgs {
    file: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StochAlgo {
    Rbs,
    Q,
}

#[derive(clap::Args)]
struct StochArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = StochAlgo::Rbs)]
    algo: StochAlgo,
    /// Samples per action per round for each worker.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Plan k and rounds from a target suboptimality (needs --tau).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: u64,
    /// Draw the workers' samples one after another on one thread.
    #[arg(long)]
    sequential: bool,
    /// Stop early once the observable residual certifies --epsilon.
    #[arg(long)]
    observable: bool,
    /// Where to write the run manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// exec-prob, random-prob, gamma-sweep, size-sweep, stoch-random,
    /// stoch-grid or stoch-ring.
    name: String,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Comma-separated subset of random, grid, cycle.
    #[arg(long, default_value = "random,grid,cycle")]
    families: String,
    /// Known-MDP score: stop (own stopping test) or oracle (first
    /// epsilon-optimal policy).
    #[arg(long, default_value = "stop")]
    metric: String,
    /// Full-size stochastic budgets.
    #[arg(long)]
    full_scale: bool,
    /// Also write an SVG line chart here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
    Assertion(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Assertion(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Assertion(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<rbsolve::Error> for Failure {
    fn from(e: rbsolve::Error) -> Self {
        use rbsolve::Error as E;
        match e {
            E::NumericalFailure { .. } => Failure::Numerical(e.to_string()),
            E::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> CliResult<Mdp> {
    read_mdp(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn generate(cli: &Cli, a: &GenerateArgs) -> CliResult {
    let mix = MixParams::new(a.exec, a.random, a.self_loop)?;
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for this kind")));
    let (mdp, params) = match a.kind {
        Kind::Random => {
            let n = need(a.n, "n")?;
            (random_mdp(n, cli.seed, mix, a.gamma)?, json!({"n": n, "mix": mix, "gamma": a.gamma}))
        }
        Kind::Grid => {
            let (rows, cols) = (need(a.rows, "rows")?, need(a.cols, "cols")?);
            (
                grid_world(rows, cols, mix, a.gamma, cli.seed)?,
                json!({"rows": rows, "cols": cols, "mix": mix, "gamma": a.gamma}),
            )
        }
        Kind::Cycle => {
            let n = need(a.n, "n")?;
            (cycle_mdp(n, mix, a.gamma, cli.seed)?, json!({"n": n, "mix": mix, "gamma": a.gamma}))
        }
        Kind::Hierarchical => {
            let classes = need(a.classes, "classes")?;
            let (mdp, labels) = hierarchical_mdp(classes, a.per_class, cli.seed, a.gamma)?;
            (
                mdp,
                json!({"classes": classes, "per_class": a.per_class, "gamma": a.gamma, "labels": labels}),
            )
        }
    };
    let kind = match a.kind {
        Kind::Random => "random",
        Kind::Grid => "grid",
        Kind::Cycle => "cycle",
        Kind::Hierarchical => "hierarchical",
    };
    let meta = generators::meta(kind, params, cli.seed);
    emit(cli.out.as_deref(), &(to_json(&mdp, Some(&meta))? + "\n"))?;
    eprintln!("n={} m={} valid=true", mdp.n(), mdp.num_actions());
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    algo: &'static str,
    iterations: usize,
    converged: bool,
    policy_hash: String,
    suboptimality: Option<f64>,
}

fn solve(cli: &Cli, a: &SolveArgs) -> CliResult {
    let mdp = load(&a.file)?;
    let (name, policy, mut trace): (&'static str, Policy, SolverTrace) = match a.algo {
        SolveAlgo::Vi => {
            let out = value_iteration(&mdp, &vec![0.0; mdp.n()], a.epsilon, a.max_iters)?;
            ("vi", out.policy, out.trace)
        }
        SolveAlgo::Pi => {
            let out = policy_iteration(&mdp, &argmax_reward_policy(&mdp))?;
            ("pi", out.policy, out.trace)
        }
        SolveAlgo::Erb => {
            let out = exact_reward_balancing(&mdp)?;
            ("erb", out.policy, out.trace)
        }
        SolveAlgo::Rbs => {
            let out = rbs_solve(&mdp, a.epsilon, a.max_iters)?;
            ("rbs", out.policy, out.trace)
        }
        SolveAlgo::RbsFilter => {
            let out = rbs_with_filtering(&mdp, a.max_iters)?;
            ("rbs-filter", out.policy, out.trace)
        }
    };
    trace.seed = Some(cli.seed);
    let mut suboptimality = None;
    if a.oracle {
        let (_, v_star) = solve_optimal(&mdp)?;
        trace.annotate_suboptimality(&mdp, &v_star)?;
        suboptimality = Some(policy_suboptimality(&mdp, &policy, &v_star)?);
    }
    let report = SolveReport {
        algo: name,
        iterations: trace.len(),
        converged: trace.converged,
        policy_hash: format!("{:016x}", policy.fingerprint()),
        suboptimality,
    };
    let data = match cli.format {
        Format::Csv => trace.to_csv(),
        Format::Json => serde_json::to_string_pretty(&json!({"report": report, "trace": trace})).expect("serializable") + "\n",
    };
    emit(cli.out.as_deref(), &data)?;
    eprintln!(
        "algo={} iterations={} converged={} policy_hash={}{}",
        report.algo,
        report.iterations,
        report.converged,
        report.policy_hash,
        suboptimality.map(|s| format!(" suboptimality={s:e}")).unwrap_or_default()
    );
    if let Some(sub) = suboptimality {
        let (limit, exact) = match a.algo {
            SolveAlgo::Vi | SolveAlgo::Rbs => (a.epsilon, false),
            _ => (IDENTITY_TOL, true),
        };
        if sub > limit {
            return Err(Failure::Assertion(format!("suboptimality {sub:e} exceeds {limit:e}")));
        }
        if exact && !certify_optimal(&mdp, &policy, 1e-7)? {
            return Err(Failure::Assertion("returned policy is not certified optimal".into()));
        }
    }
    Ok(())
}

fn normalize_cmd(cli: &Cli, a: &NormalizeArgs) -> CliResult {
    let mdp = load(&a.file)?;
    let norm = normalize(&mdp)?;
    emit(cli.out.as_deref(), &(to_json(&norm.mdp, None)? + "\n"))?;
    let v_star: Vec<f64> = norm.delta.iter().map(|d| -d).collect();
    eprintln!("V* = {v_star:?}");
    if !is_normal(&norm.mdp, 1e-7)? {
        return Err(Failure::Assertion("normalized MDP still has nonzero optimal values".into()));
    }
    eprintln!("normal: true");
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    #[serde(rename = "K")]
    workers: u64,
    k: u64,
    #[serde(rename = "T")]
    rounds: usize,
    gamma: f64,
    epsilon: Option<f64>,
    tau: Option<f64>,
    r_max: f64,
    algo: &'static str,
}

fn stoch(cli: &Cli, a: &StochArgs) -> CliResult {
    let mdp = load(&a.file)?;
    let r_max = shifted_r_max(&mdp);
    let (k, rounds) = match (a.k, a.rounds, a.epsilon, a.tau) {
        (Some(k), Some(t), _, _) => (k, t),
        (k, t, Some(eps), Some(tau)) => {
            let plan = plan_samples(eps, tau, mdp.gamma(), r_max, mdp.num_actions())?;
            eprintln!("planned k={} t={} (r_max={r_max})", plan.k, plan.t);
            (k.unwrap_or(plan.k), t.unwrap_or(plan.t))
        }
        _ => {
            return Err(Failure::Usage(
                "give a budget: --k and --rounds, or --epsilon and --tau".into(),
            ))
        }
    };
    if a.workers == 0 || k == 0 {
        return Err(Failure::Usage("--workers and --k must be at least 1".into()));
    }
    let sampling = if a.sequential {
        Sampling::Pooled { workers: a.workers, k }
    } else {
        Sampling::Generative { workers: a.workers, k }
    };
    let stopping = match (a.observable, a.epsilon) {
        (true, Some(epsilon)) => Stopping::Observable { epsilon, cap: rounds },
        (true, None) => return Err(Failure::Usage("--observable needs --epsilon".into())),
        _ => Stopping::Fixed(rounds),
    };
    let gamma = mdp.gamma();
    let model = GenerativeModel::new(mdp, cli.seed);
    let (optimal, _) = solve_optimal(&model.mdp)?;
    let (policy, trace, rewards): (Policy, Vec<RoundRecord>, Option<Vec<f64>>) = match a.algo {
        StochAlgo::Rbs => {
            let out = stochastic_rbs(&model, sampling, stopping, true)?;
            (out.policy, out.trace, Some(out.rewards))
        }
        StochAlgo::Q => {
            let out = synchronous_q_learning(&model, sampling, rounds, default_learning_rate(gamma), true)?;
            (out.policy, out.trace, None)
        }
    };
    let manifest = Manifest {
        seed: cli.seed,
        workers: a.workers,
        k,
        rounds: trace.len() - 1,
        gamma,
        epsilon: a.epsilon,
        tau: a.tau,
        r_max,
        algo: match a.algo {
            StochAlgo::Rbs => "rbs",
            StochAlgo::Q => "q",
        },
    };
    let gap = optimal_action_gap(&model.mdp, &optimal, &policy);
    let data = match cli.format {
        Format::Csv => rounds_to_csv(&trace),
        Format::Json => {
            serde_json::to_string_pretty(&json!({"manifest": manifest, "final_gap": gap, "rewards": rewards, "trace": trace}))
                .expect("serializable")
                + "\n"
        }
    };
    emit(cli.out.as_deref(), &data)?;
    if let Some(p) = &a.manifest {
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?;
    }
    eprintln!("algo={} K={} k={k} rounds={} final_gap={gap}", manifest.algo, a.workers, manifest.rounds);
    Ok(())
}

fn parse_families(list: &str) -> CliResult<Vec<Family>> {
    list.split(',')
        .map(|f| match f.trim() {
            "random" => Ok(Family::Random),
            "grid" => Ok(Family::Grid),
            "cycle" | "ring" => Ok(Family::Cycle),
            other => Err(Failure::Usage(format!("unknown family {other:?}"))),
        })
        .collect()
}

fn experiment_cmd(cli: &Cli, a: &ExperimentArgs) -> CliResult {
    let exp = Experiment::parse(&a.name)?;
    let families = parse_families(&a.families)?;
    let metric = Metric::parse(&a.metric)?;
    let rows = experiment::run(exp, &families, metric, a.reps, cli.seed, a.full_scale)?;
    let data = match cli.format {
        Format::Csv => experiment::rows_to_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows).expect("serializable") + "\n",
    };
    emit(cli.out.as_deref(), &data)?;
    if let Some(p) = &a.svg {
        let svg = line_chart(&a.name, exp.x_label(), exp.y_label(), &series_from_rows(&rows), matches!(exp, Experiment::Stoch(_)));
        fs::write(p, svg).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?;
    }
    eprintln!("experiment={} rows={} reps={}", a.name, rows.len(), a.reps);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(&cli, a),
        Command::Solve(a) => solve(&cli, a),
        Command::Normalize(a) => normalize_cmd(&cli, a),
        Command::Stoch(a) => stoch(&cli, a),
        Command::Experiment(a) => experiment_cmd(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rbsolve: {f}");
            ExitCode::from(f.code())
        }
    }
}

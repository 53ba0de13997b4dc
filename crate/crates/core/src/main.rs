use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treemdp::env_gen::{generate, serialize, EnvConfig};
use treemdp::format::{parse_document, serialize_snapshot};
use treemdp::harness::{
    evaluate, load_env, root_subset, run_experiment, solvable_targets, write_file, Budget,
    EnvSource, EvalConfig, DEFAULT_DG_MAX_STEPS,
};
use treemdp::oracle::{brute_force_v_star, check_improvement};
use treemdp::self_imitation::{metrics_csv, policy_update_exact, train, TrainConfig};
use treemdp::values::{
    advantage_table, bellman_optimal_backup, evaluate_policy, greedy_policy, value_iteration,
    value_iteration_from, StochasticPolicy, ValueTable, DEFAULT_TOL,
};

#[derive(Parser)]
#[command(
    name = "treemdp",
    about = "Worst-path planning in tree-structured MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic environment file.
    Gen(GenArgs),
    /// Train a policy on an environment and write a snapshot.
    Train(TrainArgs),
    /// Evaluate a snapshot (or its base policy) and write a report CSV.
    Eval(EvalArgs),
    /// Run the brute-force property campaigns on random small environments.
    OracleCheck(OracleArgs),
    /// Generate, train and evaluate over several seeds.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 0.4)]
    bb_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    dead_end_fraction: f64,
    #[arg(long, default_value_t = 3)]
    max_actions: usize,
}

impl EnvArgs {
    fn config(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            num_states: self.states,
            gamma: self.gamma,
            bb_fraction: self.bb_fraction,
            dead_end_fraction: self.dead_end_fraction,
            max_actions_per_state: self.max_actions,
            seed,
            ..EnvConfig::default()
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Share of solvable states used as training roots.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long, default_value_t = 6)]
    workers: usize,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            iterations: self.iterations,
            num_workers: self.workers,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    opts: TrainOpts,
    /// Snapshot output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Snapshot (or plain environment file with --base).
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Budgets: `dg` or a number of model calls. Repeatable.
    #[arg(long = "budget", default_values_t = vec!["dg".to_string(), "100".to_string(), "200".to_string(), "500".to_string()])]
    budgets: Vec<String>,
    /// Evaluate the base policy instead of the trained one.
    #[arg(long)]
    base: bool,
    #[arg(long, default_value_t = DEFAULT_DG_MAX_STEPS)]
    max_steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long = "budget", default_values_t = vec!["dg".to_string(), "100".to_string(), "200".to_string(), "500".to_string()])]
    budgets: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => {
            let (mdp, base) = generate(&a.env.config(a.seed))?;
            write_file(&a.out, &serialize(&mdp, &base))?;
            eprintln!("wrote {} states to {}", mdp.num_states(), a.out.display());
        }
        Command::Train(a) => run_train(&a)?,
        Command::Eval(a) => run_eval(&a)?,
        Command::OracleCheck(a) => run_oracle(&a)?,
        Command::Experiment(a) => {
            let cfg = EvalConfig {
                env: EnvSource::Generate(a.env.config(0)),
                budgets: parse_budgets(&a.budgets)?,
                fraction: a.opts.fraction,
                seeds: a.seed.clone(),
                train: a.opts.config(0),
                out_dir: a.out.clone(),
                ..EvalConfig::default()
            };
            let report = run_experiment(&cfg)?;
            print!("{}", report.summary);
        }
    }
    Ok(())
}

fn parse_budgets(raw: &[String]) -> Result<Vec<Budget>> {
    raw.iter()
        .map(|b| b.parse::<Budget>().map_err(Into::into))
        .collect()
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let (mdp, base) = load_env(&a.env)?;
    let targets = solvable_targets(&mdp)?;
    if targets.is_empty() {
        bail!("{} has no solvable states", a.env.display());
    }
    let roots = root_subset(&targets, a.opts.fraction, a.seed);
    let out = train(&mdp, &base, &roots, &a.opts.config(a.seed))?;
    write_file(
        &a.out,
        &serialize_snapshot(&mdp, &base, &out.policy, &out.learner.main),
    )?;
    if let Some(path) = &a.metrics {
        write_file(path, &metrics_csv(&out.metrics))?;
    }
    if let Some(last) = out.metrics.last() {
        eprintln!(
            "trained on {} roots; final DG success {:.1}%, buffer {}",
            roots.len(),
            100.0 * last.dg_success_rate,
            last.buffer_size
        );
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.snapshot)
        .with_context(|| format!("reading {}", a.snapshot.display()))?;
    let doc = parse_document(&text).with_context(|| format!("parsing {}", a.snapshot.display()))?;
    let pi = match (&doc.policy, a.base) {
        (Some(p), false) => p.clone(),
        (None, false) => bail!(
            "{} has no trained policy; pass --base",
            a.snapshot.display()
        ),
        (_, true) => doc.base.to_policy()?,
    };
    let targets = solvable_targets(&doc.mdp)?;
    let report = evaluate(
        &doc.mdp,
        &pi,
        &targets,
        &parse_budgets(&a.budgets)?,
        a.max_steps,
        a.seed,
    )?;
    write_file(&a.out, &report.to_csv())?;
    for b in &report.budgets {
        println!(
            "budget {b}: success {:.1}% over {} targets",
            report.success_rate(*b),
            targets.len()
        );
    }
    Ok(())
}

fn random_small_env(seed: u64, rng: &mut ChaCha8Rng) -> Result<treemdp::TreeMdp> {
    use rand::Rng;
    let cfg = EnvConfig {
        num_states: rng.random_range(6..=14),
        max_actions_per_state: 3,
        dead_end_fraction: 0.4,
        seed,
        ..EnvConfig::default()
    };
    Ok(generate(&cfg)?.0)
}

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn run_oracle(a: &OracleArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut contraction, mut unique, mut optimal, mut improve) = (0, 0, 0, 0);
    for i in 0..a.count {
        let mdp = random_small_env(a.seed.wrapping_mul(1_000_003).wrapping_add(i), &mut rng)?;
        let n = mdp.num_states();
        let v1 = ValueTable((0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect());
        let v2 = ValueTable((0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect());
        let lhs =
            bellman_optimal_backup(&mdp, &v1).sup_distance(&bellman_optimal_backup(&mdp, &v2));
        if lhs > mdp.gamma() * v1.sup_distance(&v2) {
            contraction += 1;
        }

        let from_zero = value_iteration_from(&mdp, ValueTable::zeros(n), 1e-12)?;
        let from_one = value_iteration_from(&mdp, ValueTable::ones(n), 1e-12)?;
        if from_zero.sup_distance(&from_one) > 1e-9 {
            unique += 1;
        }

        let v_star = value_iteration(&mdp, DEFAULT_TOL)?;
        let brute = brute_force_v_star(&mdp)?;
        let greedy = evaluate_policy(&mdp, &greedy_policy(&mdp, &v_star), DEFAULT_TOL)?;
        if brute.sup_distance(&v_star) > 1e-9 || greedy.sup_distance(&v_star) > 1e-9 {
            optimal += 1;
        }

        let mut pi = StochasticPolicy::uniform(&mdp);
        for _ in 0..5 {
            let v = evaluate_policy(&mdp, &pi, DEFAULT_TOL)?;
            let next = policy_update_exact(&pi, &advantage_table(&mdp, &v), 1.0)?;
            if !check_improvement(&mdp, &pi, &next, 1e-9)?.holds {
                improve += 1;
            }
            pi = next;
        }
    }
    report(
        "contraction",
        contraction == 0,
        format!("{contraction} violations over {} envs", a.count),
    );
    report(
        "fixed-point uniqueness",
        unique == 0,
        format!("{unique} violations"),
    );
    report(
        "oracle optimality",
        optimal == 0,
        format!("{optimal} violations"),
    );
    report(
        "monotonic improvement",
        improve == 0,
        format!("{improve} violations"),
    );
    if contraction + unique + optimal + improve > 0 {
        bail!("oracle campaign found violations");
    }
    Ok(())
}

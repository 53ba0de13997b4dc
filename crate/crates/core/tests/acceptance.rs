//! Acceptance gate. Every criterion is its own test and also writes one
//! `PASS`/`FAIL` line straight to stdout, so the lines show up even when
//! libtest captures output.

mod common;

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_choice, random_mdp, random_mdp_split, random_policy, random_values};
use treemdp::fixtures::figure3;
use treemdp::harness::{
    benchmark_env, depth_diagnostic, pearson, route_length, run_experiment, Budget, EnvSource,
    EvalConfig, ExperimentReport,
};
use treemdp::oracle::{brute_force_v_star, check_improvement, monte_carlo_objective};
use treemdp::self_imitation::{explore, policy_update_exact, TrainConfig};
use treemdp::values::{
    advantage_table, bellman_optimal_backup, evaluate_policy, greedy_policy,
    tree_worst_path_return, value_iteration, value_iteration_from, DEFAULT_TOL,
};
use treemdp::{StateId, StochasticPolicy, ValueTable};

fn report(id: &str, name: &str, ok: bool, detail: String) {
    let line = format!(
        "{} {id} {name}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

#[test]
fn a01_contraction() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut violations, mut worst_ratio) = (0, 0.0f64);
    let triples = 1000;
    for _ in 0..triples {
        let n = rng.random_range(2..=200);
        let mdp = random_mdp(&mut rng, n, 3, 3);
        let v1 = random_values(&mut rng, n);
        let v2 = random_values(&mut rng, n);
        let lhs =
            bellman_optimal_backup(&mdp, &v1).sup_distance(&bellman_optimal_backup(&mdp, &v2));
        let d = v1.sup_distance(&v2);
        // Values lie in [0, 1]; the only rounding is in the two products with
        // gamma, worth a few ulps.
        if lhs > mdp.gamma() * d + 4.0 * f64::EPSILON {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(lhs / d);
    }
    let elapsed = start.elapsed();
    let ok = violations == 0 && elapsed < Duration::from_secs(10);
    report(
        "A1",
        "contraction",
        ok,
        format!("{violations} violations over {triples} triples, max ratio {worst_ratio:.4}, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn a02_fixed_point_uniqueness() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut worst_gap, mut worst_residual) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let mdp = random_mdp(&mut rng, n, 3, 3);
        let from_zero = value_iteration_from(&mdp, ValueTable::zeros(n), 1e-12).unwrap();
        let from_one = value_iteration_from(&mdp, ValueTable::ones(n), 1e-12).unwrap();
        worst_gap = worst_gap.max(from_zero.sup_distance(&from_one));
        for v in [&from_zero, &from_one] {
            worst_residual = worst_residual.max(v.sup_distance(&bellman_optimal_backup(&mdp, v)));
        }
    }
    let ok = worst_gap <= 1e-9 && worst_residual <= 1e-9;
    report(
        "A2",
        "fixed-point uniqueness",
        ok,
        format!("max init gap {worst_gap:.2e}, max residual {worst_residual:.2e} over 100 envs"),
    );
    assert!(ok);
}

#[test]
fn a03_oracle_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut worst_vi, mut worst_greedy) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let k = rng.random_range(1..=10);
        let bbs = rng.random_range(1..=4);
        let mdp = random_mdp_split(&mut rng, k, bbs, 3, 3);
        let brute = brute_force_v_star(&mdp).unwrap();
        let v_star = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        let greedy = evaluate_policy(&mdp, &greedy_policy(&mdp, &v_star), DEFAULT_TOL).unwrap();
        worst_vi = worst_vi.max(brute.sup_distance(&v_star));
        worst_greedy = worst_greedy.max(greedy.sup_distance(&v_star));
    }
    let elapsed = start.elapsed();
    let ok = worst_vi <= 1e-9 && worst_greedy <= 1e-9 && elapsed < Duration::from_secs(60);
    report(
        "A3",
        "oracle optimality",
        ok,
        format!(
            "max |VI - brute| {worst_vi:.2e}, max |greedy - V*| {worst_greedy:.2e}, {elapsed:.2?}"
        ),
    );
    assert!(ok);
}

#[test]
fn a04_monotonic_improvement() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut violations, mut worst_drop, mut checks) = (0, 0.0f64, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let mdp = random_mdp(&mut rng, n, 3, 3);
        for beta in [0.5, 1.0, 5.0] {
            let mut pi = random_policy(&mut rng, &mdp, 0.3);
            for _ in 0..5 {
                let v = evaluate_policy(&mdp, &pi, DEFAULT_TOL).unwrap();
                let next = policy_update_exact(&pi, &advantage_table(&mdp, &v), beta).unwrap();
                let r = check_improvement(&mdp, &pi, &next, 1e-9).unwrap();
                checks += 1;
                worst_drop = worst_drop.max(r.worst_drop);
                if !r.holds {
                    violations += 1;
                }
                pi = next;
            }
        }
    }
    let ok = violations == 0;
    report(
        "A4",
        "monotonic improvement",
        ok,
        format!("{violations} violations over {checks} updates, max drop {worst_drop:.2e}"),
    );
    assert!(ok);
}

#[test]
fn a05_rollout_value_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let mdp = random_mdp(&mut rng, n, 3, 3);
        let pi = StochasticPolicy::deterministic(&mdp, &random_choice(&mut rng, &mdp));
        let root = StateId(rng.random_range(0..n));
        let v = evaluate_policy(&mdp, &pi, DEFAULT_TOL).unwrap().get(root);
        let (mean, se) = monte_carlo_objective(&mdp, &pi, root, 8, &mut rng).unwrap();
        let tree = explore(&mdp, &pi, root, treemdp::oracle::MC_MAX_STEPS, &mut rng).unwrap();
        let realised = tree_worst_path_return(&tree, &mdp);
        if se != 0.0 || mean != v || realised != v {
            mismatches += 1;
        }
    }
    let ok = mismatches == 0;
    report(
        "A5",
        "rollout/value consistency",
        ok,
        format!("{mismatches} mismatches over 100 policies"),
    );
    assert!(ok);
}

#[test]
fn a06_figure3_fixture() {
    let g = 0.95;
    let mdp = figure3::mdp(g);
    let left = figure3::left_tree(&mdp);
    let right = figure3::right_tree(&mdp);
    let lv = tree_worst_path_return(&left, &mdp);
    let rv = tree_worst_path_return(&right, &mdp);
    let len = route_length(&left).unwrap();
    let ok = lv == g * g * g * g && rv == 0.0 && len == 4;
    report(
        "A6",
        "figure fixture",
        ok,
        format!("left {lv}, right {rv}, left route length {len}"),
    );
    assert!(ok);
}

const BENCH_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BENCH_BUDGETS: [Budget; 4] = [
    Budget::Direct,
    Budget::Calls(10),
    Budget::Calls(50),
    Budget::Calls(100),
];

struct Benchmark {
    beta10: ExperimentReport,
    beta0: ExperimentReport,
    elapsed: Duration,
    _dir: tempfile::TempDir,
}

fn run_bench(beta: f64, out: &Path) -> ExperimentReport {
    let cfg = EvalConfig {
        env: EnvSource::Generate(benchmark_env(0)),
        budgets: BENCH_BUDGETS.to_vec(),
        seeds: BENCH_SEEDS.to_vec(),
        train: TrainConfig {
            beta,
            ..TrainConfig::default()
        },
        out_dir: out.to_path_buf(),
        ..EvalConfig::default()
    };
    run_experiment(&cfg).unwrap()
}

fn benchmark() -> &'static Benchmark {
    static BENCH: OnceLock<Benchmark> = OnceLock::new();
    BENCH.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let beta10 = run_bench(10.0, &dir.path().join("beta10"));
        let beta0 = run_bench(0.0, &dir.path().join("beta0"));
        Benchmark {
            beta10,
            beta0,
            elapsed: start.elapsed(),
            _dir: dir,
        }
    })
}

#[test]
fn a07_training_efficacy() {
    let b = benchmark();
    let mut ok = b.elapsed < Duration::from_secs(600);
    let mut detail = Vec::new();
    for (r10, r0) in b.beta10.runs.iter().zip(&b.beta0.runs) {
        let targets = r10
            .base
            .rows
            .iter()
            .filter(|r| r.budget == Budget::Direct)
            .count();
        let base = r10.base.success_rate(Budget::Direct);
        let t10 = r10.trained.success_rate(Budget::Direct);
        let t0 = r0.trained.success_rate(Budget::Direct);
        ok &= targets >= 100 && t10 - base >= 30.0 && t10 >= t0;
        detail.push(format!(
            "seed {} n={targets} base {base:.1} b10 {t10:.1} b0 {t0:.1}",
            r10.seed
        ));
    }
    report(
        "A7",
        "training efficacy",
        ok,
        format!("{}; {:.1?}", detail.join("; "), b.elapsed),
    );
    assert!(ok);
}

#[test]
fn a08_route_length_trend() {
    let b = benchmark();
    let mut wins = 0;
    let mut detail = Vec::new();
    for run in &b.beta10.runs {
        let trained_solved = run.trained.solved(Budget::Direct);
        let common: Vec<StateId> = run
            .base
            .solved(Budget::Direct)
            .into_iter()
            .filter(|t| trained_solved.contains(t))
            .collect();
        let base = run
            .base
            .mean_route_length(Budget::Direct, Some(&common))
            .unwrap();
        let trained = run
            .trained
            .mean_route_length(Budget::Direct, Some(&common))
            .unwrap();
        if trained <= base {
            wins += 1;
        }
        detail.push(format!("seed {} {trained:.3} vs {base:.3}", run.seed));
    }
    let ok = wins >= 4;
    report(
        "A8",
        "route-length trend",
        ok,
        format!("{wins}/5 seeds shorter or equal; {}", detail.join("; ")),
    );
    assert!(ok);
}

#[test]
fn a09_budget_monotonicity() {
    let b = benchmark();
    let mut bad = Vec::new();
    let runs = b.beta10.runs.iter().map(|r| ("base", r.seed, &r.base));
    let runs = runs.chain(b.beta10.runs.iter().map(|r| ("beta10", r.seed, &r.trained)));
    let runs = runs.chain(b.beta0.runs.iter().map(|r| ("beta0", r.seed, &r.trained)));
    for (name, seed, rep) in runs {
        let rates: Vec<f64> = BENCH_BUDGETS
            .iter()
            .map(|&bu| rep.success_rate(bu))
            .collect();
        if rates.windows(2).any(|w| w[1] < w[0]) {
            bad.push(format!("{name} seed {seed} {rates:?}"));
        }
    }
    let ok = bad.is_empty();
    report(
        "A9",
        "budget monotonicity",
        ok,
        format!("{} non-monotone runs {bad:?}", bad.len()),
    );
    assert!(ok);
}

#[test]
fn a10_depth_estimation() {
    let b = benchmark();
    let mut all = Vec::new();
    let mut detail = Vec::new();
    let mut ok = true;
    for run in &b.beta10.runs {
        let pairs = depth_diagnostic(&run.trained, &run.outcome.learner.main, 0.95);
        let r = pearson(&pairs);
        ok &= r > 0.5;
        detail.push(format!("seed {} r={r:.3} n={}", run.seed, pairs.len()));
        all.extend(pairs);
    }
    let pooled = pearson(&all);
    ok &= pooled > 0.5;
    report(
        "A10",
        "depth estimation",
        ok,
        format!("pooled r={pooled:.3}; {}", detail.join("; ")),
    );
    assert!(ok);
}

fn cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_treemdp"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "treemdp {args:?} failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

#[test]
fn a11_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    cli(&[
        "gen",
        "--seed",
        "11",
        "--states",
        "120",
        "--out",
        &p("env.txt"),
    ]);
    for run in ["1", "2"] {
        cli(&[
            "train",
            "--env",
            &p("env.txt"),
            "--seed",
            "3",
            "--beta",
            "10",
            "--iterations",
            "60",
            "--out",
            &p(&format!("snap{run}.txt")),
            "--metrics",
            &p(&format!("metrics{run}.csv")),
        ]);
        cli(&[
            "eval",
            "--snapshot",
            &p(&format!("snap{run}.txt")),
            "--seed",
            "3",
            "--budget",
            "dg",
            "--budget",
            "50",
            "--out",
            &p(&format!("report{run}.csv")),
        ]);
    }
    let same = |a: &str, b: &str| std::fs::read(p(a)).unwrap() == std::fs::read(p(b)).unwrap();
    let files = [
        ("snap1.txt", "snap2.txt"),
        ("metrics1.csv", "metrics2.csv"),
        ("report1.csv", "report2.csv"),
    ];
    let diffs: Vec<_> = files
        .iter()
        .filter(|(a, b)| !same(a, b))
        .map(|(a, _)| *a)
        .collect();
    let header_ok = std::fs::read_to_string(p("report1.csv"))
        .unwrap()
        .starts_with("target,budget,success,calls,route_length,worst_path_return\n");
    let ok = diffs.is_empty() && header_ok;
    report(
        "A11",
        "reproducibility",
        ok,
        format!("differing outputs {diffs:?}, report header ok {header_ok}"),
    );
    assert!(ok);
}

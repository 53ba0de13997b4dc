//! Evaluation protocol: direct generation, budgeted restart search, route
//! statistics, reports and sweeps.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env_gen::{generate, BasePolicy, EnvConfig};
use crate::error::{Error, Result};
use crate::format::{parse_document, serialize_snapshot};
use crate::mdp::{StateId, TreeMdp};
use crate::self_imitation::{
    explore, explore_with, is_successful, train, SynTree, TrainConfig, TrainOutcome,
};
use crate::values::{
    estimated_depth, tree_worst_path_return, value_iteration, StochasticPolicy, ValueTable,
    DEFAULT_TOL,
};

pub const REPORT_HEADER: &str = "target,budget,success,calls,route_length,worst_path_return";
pub const DEFAULT_DG_MAX_STEPS: usize = 10;
pub const BENCHMARK_STATES: usize = 500;

/// The standard 500-state benchmark environment for a seed.
pub fn benchmark_env(seed: u64) -> EnvConfig {
    EnvConfig {
        num_states: BENCHMARK_STATES,
        seed,
        ..EnvConfig::default()
    }
}

/// One greedy rollout: the most probable action at every node.
pub fn direct_generate(
    mdp: &TreeMdp,
    pi: &StochasticPolicy,
    root: StateId,
    max_steps: usize,
) -> Result<(bool, SynTree)> {
    pi.check_shape(mdp)?;
    let tree = explore_with(mdp, root, max_steps, |s| {
        pi.argmax_action(s)
            .expect("non-terminal states have actions")
    })?;
    Ok((is_successful(&tree, tree.root()), tree))
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub success: bool,
    pub tree: SynTree,
    pub calls_used: usize,
}

/// Restart search under a budget of model calls (expansions). The first
/// attempt is greedy, later ones sample from `pi`; each attempt is capped at
/// `min(max_steps, remaining budget)`. Returns the first successful tree or
/// else the one with the highest worst-path return (earliest on ties).
pub fn budgeted_search<R: Rng + ?Sized>(
    mdp: &TreeMdp,
    pi: &StochasticPolicy,
    root: StateId,
    budget: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    let mut used = 0;
    let mut best: Option<(f64, SynTree)> = None;
    let mut first = true;
    while used < budget {
        let cap = max_steps.min(budget - used);
        let tree = if first {
            direct_generate(mdp, pi, root, cap)?.1
        } else {
            explore(mdp, pi, root, cap, rng)?
        };
        first = false;
        let calls = tree.num_expanded();
        used += calls;
        if is_successful(&tree, tree.root()) {
            return Ok(SearchOutcome {
                success: true,
                tree,
                calls_used: used,
            });
        }
        let value = tree_worst_path_return(&tree, mdp);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, tree));
        }
        if calls == 0 {
            break;
        }
    }
    let (_, tree) = best.expect("at least one attempt runs");
    Ok(SearchOutcome {
        success: false,
        tree,
        calls_used: used,
    })
}

/// Number of reactions in a successful tree.
pub fn route_length(tree: &SynTree) -> Result<usize> {
    if !is_successful(tree, tree.root()) {
        return Err(Error::NotSolved);
    }
    Ok(tree.num_expanded())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Budget {
    Direct,
    Calls(usize),
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Direct => f.write_str("dg"),
            Budget::Calls(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dg" | "direct" => Ok(Budget::Direct),
            _ => match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Budget::Calls(n)),
                _ => Err(Error::InvalidConfig(format!("invalid budget {s:?}"))),
            },
        }
    }
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub target: StateId,
    pub budget: Budget,
    pub success: bool,
    pub calls: usize,
    /// Reactions in the route; `None` when unsolved.
    pub route_length: Option<usize>,
    pub worst_path_return: f64,
    /// Longest root-to-leaf path of the returned tree.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub budgets: Vec<Budget>,
    pub rows: Vec<Outcome>,
}

impl EvalReport {
    /// Success rate in percent for one budget.
    pub fn success_rate(&self, budget: Budget) -> f64 {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.budget == budget).collect();
        if rows.is_empty() {
            return 0.0;
        }
        100.0 * rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64
    }

    /// Mean route length over solved targets at `budget`, optionally
    /// restricted to `only` targets.
    pub fn mean_route_length(&self, budget: Budget, only: Option<&[StateId]>) -> Option<f64> {
        let lengths: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.budget == budget && only.is_none_or(|o| o.contains(&r.target)))
            .filter_map(|r| r.route_length)
            .collect();
        if lengths.is_empty() {
            None
        } else {
            Some(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64)
        }
    }

    pub fn solved(&self, budget: Budget) -> Vec<StateId> {
        self.rows
            .iter()
            .filter(|r| r.budget == budget && r.success)
            .map(|r| r.target)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.target,
                r.budget,
                u8::from(r.success),
                r.calls,
                r.route_length.map_or(String::new(), |l| l.to_string()),
                r.worst_path_return
            );
        }
        out
    }
}

/// Parses report CSV produced by [`EvalReport::to_csv`]. The tree depth is
/// not part of the file and comes back as 0.
pub fn parse_report_csv(text: &str) -> Result<Vec<Outcome>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .is_ok_and(|h| h.iter().eq(REPORT_HEADER.split(',')));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            message: "missing report header".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |m: &str| Error::Parse {
            line,
            message: m.to_string(),
        };
        let f = |i: usize| &record[i];
        rows.push(Outcome {
            target: StateId(f(0).parse().map_err(|_| bad("target"))?),
            budget: f(1).parse().map_err(|_| bad("budget"))?,
            success: match f(2) {
                "1" => true,
                "0" => false,
                _ => return Err(bad("success")),
            },
            calls: f(3).parse().map_err(|_| bad("calls"))?,
            route_length: if f(4).is_empty() {
                None
            } else {
                Some(f(4).parse().map_err(|_| bad("route_length"))?)
            },
            worst_path_return: f(5).parse().map_err(|_| bad("worst_path_return"))?,
            depth: 0,
        });
    }
    Ok(rows)
}

/// Evaluates every target under direct generation and each call budget.
/// Target `i` draws its restarts from ChaCha8 stream `i` of `seed`, the same
/// stream for every budget, so a larger budget replays the smaller one
/// first.
pub fn evaluate(
    mdp: &TreeMdp,
    pi: &StochasticPolicy,
    targets: &[StateId],
    budgets: &[Budget],
    max_steps: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(targets.len() * budgets.len());
    for &budget in budgets {
        for (i, &target) in targets.iter().enumerate() {
            let (success, tree, calls) = match budget {
                Budget::Direct => {
                    let (ok, tree) = direct_generate(mdp, pi, target, max_steps)?;
                    let calls = tree.num_expanded();
                    (ok, tree, calls)
                }
                Budget::Calls(b) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let o = budgeted_search(mdp, pi, target, b, max_steps, &mut rng)?;
                    (o.success, o.tree, o.calls_used)
                }
            };
            rows.push(Outcome {
                target,
                budget,
                success,
                calls,
                route_length: route_length(&tree).ok(),
                worst_path_return: tree_worst_path_return(&tree, mdp),
                depth: tree.depth(),
            });
        }
    }
    Ok(EvalReport {
        budgets: budgets.to_vec(),
        rows,
    })
}

/// Non-building-block states with a positive optimal value.
pub fn solvable_targets(mdp: &TreeMdp) -> Result<Vec<StateId>> {
    let v = value_iteration(mdp, DEFAULT_TOL)?;
    Ok(mdp
        .states()
        .filter(|&s| !mdp.is_building_block(s) && v.get(s) > 0.0)
        .collect())
}

/// The first `ceil(fraction * n)` roots after a seeded shuffle.
pub fn root_subset(roots: &[StateId], fraction: f64, seed: u64) -> Vec<StateId> {
    use rand::seq::SliceRandom;
    let mut shuffled = roots.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let k = ((fraction * roots.len() as f64).ceil() as usize).clamp(1, roots.len().max(1));
    shuffled.truncate(k);
    shuffled
}

/// `(estimated depth from the value table, realised route depth)` for every
/// target solved by direct generation with a positive value estimate.
pub fn depth_diagnostic(report: &EvalReport, values: &ValueTable, gamma: f64) -> Vec<(f64, f64)> {
    report
        .rows
        .iter()
        .filter(|r| r.budget == Budget::Direct && r.success)
        .filter_map(|r| {
            estimated_depth(values.get(r.target), gamma)
                .ok()
                .map(|d| (d, r.depth as f64))
        })
        .collect()
}

pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Where the environment for an experiment comes from.
#[derive(Debug, Clone)]
pub enum EnvSource {
    File(PathBuf),
    Generate(EnvConfig),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub env: EnvSource,
    /// Evaluation targets; `None` means every solvable state.
    pub targets: Option<Vec<StateId>>,
    pub budgets: Vec<Budget>,
    /// Share of the targets used as training roots.
    pub fraction: f64,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub max_steps: usize,
    pub out_dir: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            env: EnvSource::Generate(EnvConfig::default()),
            targets: None,
            budgets: vec![
                Budget::Direct,
                Budget::Calls(100),
                Budget::Calls(200),
                Budget::Calls(500),
            ],
            fraction: 1.0,
            seeds: vec![0],
            train: TrainConfig::default(),
            max_steps: DEFAULT_DG_MAX_STEPS,
            out_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub base: EvalReport,
    pub trained: EvalReport,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<SeedRun>,
    pub summary: String,
}

pub fn load_env(path: &Path) -> Result<(TreeMdp, BasePolicy)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc = parse_document(&text)?;
    Ok((doc.mdp, doc.base))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// For each seed: builds the environment, trains on a fraction of the
/// targets, evaluates base and trained policies, and writes
/// `report_base_seed<k>.csv`, `report_trained_seed<k>.csv`,
/// `metrics_seed<k>.csv`, `snapshot_seed<k>.txt` and `summary.csv` into
/// `out_dir`. The summary has one row per seed, policy and budget, then
/// `mean` rows averaging the success rate over seeds.
pub fn run_experiment(cfg: &EvalConfig) -> Result<ExperimentReport> {
    if cfg.budgets.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least one budget and one seed".into(),
        ));
    }
    let mut runs = Vec::new();
    let mut summary = String::from("seed,policy,budget,success_rate,mean_route_length\n");
    for &seed in &cfg.seeds {
        let (mdp, base) = match &cfg.env {
            EnvSource::File(p) => load_env(p)?,
            EnvSource::Generate(env) => generate(&EnvConfig {
                seed,
                ..env.clone()
            })?,
        };
        let targets = match &cfg.targets {
            Some(t) => t.clone(),
            None => solvable_targets(&mdp)?,
        };
        if targets.is_empty() {
            return Err(Error::InvalidConfig("no evaluation targets".into()));
        }
        let roots = root_subset(&targets, cfg.fraction, seed);
        let tcfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let outcome = train(&mdp, &base, &roots, &tcfg)?;
        let base_pi = base.to_policy()?;
        let base_report = evaluate(&mdp, &base_pi, &targets, &cfg.budgets, cfg.max_steps, seed)?;
        let trained = evaluate(
            &mdp,
            &outcome.policy,
            &targets,
            &cfg.budgets,
            cfg.max_steps,
            seed,
        )?;

        let dir = &cfg.out_dir;
        write_file(
            &dir.join(format!("report_base_seed{seed}.csv")),
            &base_report.to_csv(),
        )?;
        write_file(
            &dir.join(format!("report_trained_seed{seed}.csv")),
            &trained.to_csv(),
        )?;
        write_file(
            &dir.join(format!("metrics_seed{seed}.csv")),
            &crate::self_imitation::metrics_csv(&outcome.metrics),
        )?;
        write_file(
            &dir.join(format!("snapshot_seed{seed}.txt")),
            &serialize_snapshot(&mdp, &base, &outcome.policy, &outcome.learner.main),
        )?;

        // Route lengths compare only targets both policies solve.
        for (name, report) in [("base", &base_report), ("trained", &trained)] {
            for &b in &cfg.budgets {
                let common: Vec<StateId> = base_report
                    .solved(b)
                    .into_iter()
                    .filter(|t| trained.solved(b).contains(t))
                    .collect();
                let len = report
                    .mean_route_length(b, Some(&common))
                    .map_or(String::new(), |l| l.to_string());
                let _ = writeln!(
                    summary,
                    "{seed},{name},{b},{},{len}",
                    report.success_rate(b)
                );
            }
        }
        runs.push(SeedRun {
            seed,
            base: base_report,
            trained,
            outcome,
        });
    }
    let k = runs.len() as f64;
    for name in ["base", "trained"] {
        for &b in &cfg.budgets {
            let rate: f64 = runs
                .iter()
                .map(|r| if name == "base" { &r.base } else { &r.trained }.success_rate(b))
                .sum::<f64>()
                / k;
            let _ = writeln!(summary, "mean,{name},{b},{rate},");
        }
    }
    write_file(&cfg.out_dir.join("summary.csv"), &summary)?;
    Ok(ExperimentReport { runs, summary })
}

use std::fmt::Write as _;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{explore, extract_successful_branches, is_successful, policy_update_sampled};
use super::{ReplayBuffer, SynTree, TabularValueLearner};
use crate::env_gen::BasePolicy;
use crate::error::{Error, Result};
use crate::harness::direct_generate;
use crate::mdp::{StateId, TreeMdp};
use crate::values::{tree_worst_path_return, StochasticPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Advantage coefficient of the imitation weights.
    pub beta: f64,
    /// Upper bound on the imitation weight `exp(beta * A)`.
    pub clip_c: f64,
    pub buffer_capacity: usize,
    pub trees_per_iter: usize,
    pub updates_per_iter: usize,
    pub num_workers: usize,
    /// Expansion cap per exploration rollout.
    pub max_steps: usize,
    /// Expansion cap for the greedy rollouts behind `dg_success_rate`.
    pub dg_max_steps: usize,
    pub value_lr: f64,
    pub policy_lr: f64,
    pub target_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            clip_c: 20.0,
            buffer_capacity: 20_000,
            trees_per_iter: 36,
            updates_per_iter: 5,
            num_workers: 6,
            max_steps: 20,
            dg_max_steps: 10,
            value_lr: 0.5,
            policy_lr: 0.1,
            target_rate: 0.05,
            batch_size: 256,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.beta >= 0.0) {
            return fail("beta must be non-negative");
        }
        if !(self.clip_c > 0.0) {
            return fail("clip_c must be positive");
        }
        for rate in [self.value_lr, self.policy_lr, self.target_rate] {
            if !(rate > 0.0 && rate <= 1.0) {
                return fail("learning and tracking rates must lie in (0, 1]");
            }
        }
        let counts = [
            self.buffer_capacity,
            self.trees_per_iter,
            self.updates_per_iter,
            self.num_workers,
            self.max_steps,
            self.dg_max_steps,
            self.batch_size,
        ];
        if counts.contains(&0) {
            return fail("counts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub trees_collected: usize,
    pub branches_added: usize,
    pub buffer_size: usize,
    /// Share of training roots solved by a greedy rollout after the updates.
    pub dg_success_rate: f64,
    /// Mean worst-path return of the collected trees.
    pub mean_worst_path_return: f64,
    /// Mean number of decompositions over successful collected trees, 0 if none.
    pub mean_route_length: f64,
}

pub const METRICS_HEADER: &str =
    "iteration,trees_collected,branches_added,buffer_size,dg_success_rate,mean_worst_path_return,mean_route_length";

pub fn metrics_csv(metrics: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.iteration,
            m.trees_collected,
            m.branches_added,
            m.buffer_size,
            m.dg_success_rate,
            m.mean_worst_path_return,
            m.mean_route_length
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: StochasticPolicy,
    pub learner: TabularValueLearner,
    pub metrics: Vec<IterationMetrics>,
}

/// Round-robin over the roots, reshuffled at the start of every pass.
struct RootCycle {
    order: Vec<StateId>,
    cursor: usize,
}

impl RootCycle {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> StateId {
        if self.cursor == 0 {
            self.order.shuffle(rng);
        }
        let s = self.order[self.cursor];
        self.cursor = (self.cursor + 1) % self.order.len();
        s
    }
}

/// Runs the self-imitation loop from the base policy.
///
/// Stream 0 of the ChaCha8 generator seeded with `cfg.seed` drives root
/// shuffling and buffer sampling; rollout `k` (counted over the whole run)
/// uses stream `k + 1`, so results do not depend on how rollouts are
/// spread across workers.
pub fn train(
    mdp: &TreeMdp,
    base: &BasePolicy,
    roots: &[StateId],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if roots.is_empty() {
        return Err(Error::InvalidConfig("no training roots".into()));
    }
    for &r in roots {
        mdp.check_state(r)?;
    }
    base.check(mdp)?;

    let mut policy = base.to_policy()?;
    let mut learner = TabularValueLearner::new(mdp, cfg.target_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cycle = RootCycle {
        order: roots.to_vec(),
        cursor: 0,
    };
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut rollouts: u64 = 0;

    for iteration in 0..cfg.iterations {
        let batch_roots: Vec<StateId> = (0..cfg.trees_per_iter)
            .map(|_| cycle.next(&mut rng))
            .collect();
        let trees = collect_trees(mdp, &policy, &batch_roots, cfg, rollouts)?;
        rollouts += trees.len() as u64;

        let mut branches_added = 0;
        let mut return_sum = 0.0;
        let mut solved = 0usize;
        let mut route_sum = 0usize;
        for tree in &trees {
            let branches = extract_successful_branches(tree);
            branches_added += branches.len();
            buffer.push(branches);
            return_sum += tree_worst_path_return(tree, mdp);
            if is_successful(tree, tree.root()) {
                solved += 1;
                route_sum += tree.num_expanded();
            }
        }

        if !buffer.is_empty() {
            for _ in 0..cfg.updates_per_iter {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                learner.update(mdp, &batch, cfg.value_lr);
                policy = policy_update_sampled(
                    &policy,
                    &learner,
                    mdp,
                    &batch,
                    cfg.beta,
                    cfg.clip_c,
                    cfg.policy_lr,
                )?;
            }
        }

        metrics.push(IterationMetrics {
            iteration,
            trees_collected: trees.len(),
            branches_added,
            buffer_size: buffer.len(),
            dg_success_rate: dg_success_rate(mdp, &policy, roots, cfg.dg_max_steps)?,
            mean_worst_path_return: return_sum / trees.len() as f64,
            mean_route_length: if solved == 0 {
                0.0
            } else {
                route_sum as f64 / solved as f64
            },
        });
    }

    Ok(TrainOutcome {
        policy,
        learner,
        metrics,
    })
}

/// Rollouts against an immutable policy snapshot. Worker `w` handles a
/// contiguous chunk of roots; chunks are concatenated in worker order.
fn collect_trees(
    mdp: &TreeMdp,
    policy: &StochasticPolicy,
    roots: &[StateId],
    cfg: &TrainConfig,
    first_rollout: u64,
) -> Result<Vec<SynTree>> {
    let chunk = roots
        .len()
        .div_ceil(cfg.num_workers.min(roots.len()).max(1));
    let results: Vec<Result<Vec<SynTree>>> = thread::scope(|scope| {
        let handles: Vec<_> = roots
            .chunks(chunk)
            .enumerate()
            .map(|(w, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, &root)| {
                            let k = first_rollout + (w * chunk + j) as u64;
                            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                            rng.set_stream(k + 1);
                            explore(mdp, policy, root, cfg.max_steps, &mut rng)
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rollout worker panicked"))
            .collect()
    });
    let mut trees = Vec::with_capacity(roots.len());
    for r in results {
        trees.extend(r?);
    }
    Ok(trees)
}

pub(crate) fn dg_success_rate(
    mdp: &TreeMdp,
    policy: &StochasticPolicy,
    roots: &[StateId],
    max_steps: usize,
) -> Result<f64> {
    let mut solved = 0;
    for &r in roots {
        if direct_generate(mdp, policy, r, max_steps)?.0 {
            solved += 1;
        }
    }
    Ok(solved as f64 / roots.len() as f64)
}

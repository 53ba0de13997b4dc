//! Seeded synthetic environments shaped like retrosynthesis problems.
//!
//! Non-building-block states are split into *productive* states, ranked so
//! that every productive action only decomposes into building blocks or
//! lower-ranked productive states, and *trap* states whose actions always
//! lead back into the trap set. Routes through productive actions are
//! finite; any action touching a trap is a dead end.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `EnvConfig::seed`; generation attempt `k` uses stream `k`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mdp::{StateId, TreeMdp};
use crate::values::{value_iteration, StochasticPolicy, DEFAULT_TOL};

pub use crate::format::{deserialize, serialize};

const MAX_ATTEMPTS: u64 = 100;
const MIN_SOLVABLE_SHARE: f64 = 0.5;
/// Share of non-building-block states turned into traps when dead ends are
/// requested.
const TRAP_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_states: usize,
    pub max_actions_per_state: usize,
    /// Weights over 1, 2, ..., K children per action.
    pub child_count_weights: Vec<f64>,
    pub bb_fraction: f64,
    /// Share of productive states that get one dead-end action.
    pub dead_end_fraction: f64,
    /// Probability that a base-policy action is hard-masked to zero.
    pub mask_fraction: f64,
    /// Probability that a child of a productive action is a building block
    /// rather than a lower-ranked productive state.
    pub leaf_child_prob: f64,
    pub seed: u64,
    pub gamma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_states: 100,
            max_actions_per_state: 3,
            child_count_weights: vec![0.55, 0.35, 0.10],
            bb_fraction: 0.4,
            dead_end_fraction: 0.5,
            mask_fraction: 0.2,
            leaf_child_prob: 0.5,
            seed: 0,
            gamma: 0.95,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.num_states < 2 {
            return fail(format!("need at least 2 states, got {}", self.num_states));
        }
        if self.max_actions_per_state == 0 {
            return fail("max_actions_per_state must be positive".into());
        }
        if !(self.bb_fraction > 0.0 && self.bb_fraction < 1.0) {
            return fail(format!("bb_fraction {} not in (0, 1)", self.bb_fraction));
        }
        if self.child_count_weights.is_empty()
            || self.child_count_weights.iter().any(|w| !(*w >= 0.0))
        {
            return fail("child_count_weights must be non-empty and non-negative".into());
        }
        let sum: f64 = self.child_count_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("child_count_weights sum to {sum}"));
        }
        for (name, p) in [
            ("dead_end_fraction", self.dead_end_fraction),
            ("mask_fraction", self.mask_fraction),
            ("leaf_child_prob", self.leaf_child_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} not in [0, 1]"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma {} not in (0, 1)", self.gamma));
        }
        Ok(())
    }
}

/// Prior over feasible actions; zero entries define the support every
/// learned policy must stay inside.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePolicy {
    pub probs: Vec<Vec<f64>>,
}

impl BasePolicy {
    pub fn support(&self) -> Vec<Vec<bool>> {
        self.probs
            .iter()
            .map(|row| row.iter().map(|&p| p > 0.0).collect())
            .collect()
    }

    pub fn to_policy(&self) -> Result<StochasticPolicy> {
        StochasticPolicy::new(self.probs.clone(), self.support())
    }

    /// Non-negative rows summing to one with a positive entry on every
    /// non-terminal state.
    pub fn check(&self, mdp: &TreeMdp) -> Result<()> {
        if self.probs.len() != mdp.num_states() {
            return Err(Error::InvalidPolicy(format!(
                "base policy covers {} states, MDP has {}",
                self.probs.len(),
                mdp.num_states()
            )));
        }
        for s in mdp.states() {
            let row = &self.probs[s.0];
            if row.len() != mdp.num_actions(s) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: wrong action count"
                )));
            }
            if row.is_empty() {
                continue;
            }
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: negative probability"
                )));
            }
            if !row.iter().any(|&p| p > 0.0) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: no positive probability"
                )));
            }
        }
        self.to_policy().map(|_| ())
    }
}

pub fn generate(cfg: &EnvConfig) -> Result<(TreeMdp, BasePolicy)> {
    cfg.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(attempt);
        let (mdp, base) = generate_once(cfg, &mut rng)?;
        if solvable_share(&mdp)? >= MIN_SOLVABLE_SHARE {
            return Ok((mdp, base));
        }
    }
    Err(Error::GenerationFailure(format!(
        "fewer than {:.0}% of states solvable after {MAX_ATTEMPTS} attempts",
        MIN_SOLVABLE_SHARE * 100.0
    )))
}

/// Share of non-building-block states with a positive optimal value.
pub fn solvable_share(mdp: &TreeMdp) -> Result<f64> {
    let v = value_iteration(mdp, DEFAULT_TOL)?;
    let (mut total, mut solvable) = (0usize, 0usize);
    for s in mdp.states().filter(|&s| !mdp.is_building_block(s)) {
        total += 1;
        if v.get(s) > 0.0 {
            solvable += 1;
        }
    }
    Ok(if total == 0 {
        1.0
    } else {
        solvable as f64 / total as f64
    })
}

fn generate_once(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<(TreeMdp, BasePolicy)> {
    let n = cfg.num_states;
    let n_bb = ((cfg.bb_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let bbs: Vec<StateId> = order[..n_bb].iter().map(|&s| StateId(s)).collect();
    let others = &order[n_bb..];
    let m = others.len();
    let n_trap = if cfg.dead_end_fraction > 0.0 && m >= 2 {
        ((TRAP_SHARE * m as f64).round() as usize).clamp(1, m - 1)
    } else {
        0
    };
    let productive: Vec<StateId> = others[..m - n_trap].iter().map(|&s| StateId(s)).collect();
    let traps: Vec<StateId> = others[m - n_trap..].iter().map(|&s| StateId(s)).collect();

    let mut building_block = vec![false; n];
    for s in &bbs {
        building_block[s.0] = true;
    }
    let mut transitions: Vec<Vec<Vec<StateId>>> = vec![Vec::new(); n];
    // Per state: which actions are productive (reach building blocks).
    let mut productive_action: Vec<Vec<bool>> = vec![Vec::new(); n];

    for (rank, &s) in productive.iter().enumerate() {
        let mut k = rng.random_range(1..=cfg.max_actions_per_state);
        let dead = n_trap > 0 && rng.random::<f64>() < cfg.dead_end_fraction;
        if dead && k == 1 && cfg.max_actions_per_state >= 2 {
            k = 2;
        }
        let mut actions: Vec<Vec<StateId>> = (0..k)
            .map(|_| {
                let count = sample_child_count(&cfg.child_count_weights, rng);
                (0..count)
                    .map(|_| {
                        if rank == 0 || rng.random::<f64>() < cfg.leaf_child_prob {
                            bbs[rng.random_range(0..bbs.len())]
                        } else {
                            productive[rng.random_range(0..rank)]
                        }
                    })
                    .collect()
            })
            .collect();
        let mut flags = vec![true; k];
        // With a single action slot the only action is poisoned.
        if dead {
            let a = rng.random_range(0..k);
            let slot = rng.random_range(0..actions[a].len());
            actions[a][slot] = traps[rng.random_range(0..traps.len())];
            flags[a] = false;
        }
        transitions[s.0] = actions;
        productive_action[s.0] = flags;
    }

    for &s in &traps {
        let k = rng.random_range(1..=cfg.max_actions_per_state);
        let actions = (0..k)
            .map(|_| {
                let count = sample_child_count(&cfg.child_count_weights, rng);
                let anchor = rng.random_range(0..count);
                (0..count)
                    .map(|i| {
                        if i == anchor || rng.random::<f64>() < 0.5 {
                            traps[rng.random_range(0..traps.len())]
                        } else {
                            bbs[rng.random_range(0..bbs.len())]
                        }
                    })
                    .collect()
            })
            .collect();
        transitions[s.0] = actions;
        productive_action[s.0] = vec![false; k];
    }

    let mdp = TreeMdp::new(transitions, building_block, cfg.gamma)?;
    let base = base_policy(&mdp, &productive_action, cfg.mask_fraction, rng);
    base.check(&mdp)?;
    Ok((mdp, base))
}

fn sample_child_count(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum && *w > 0.0 {
            return i + 1;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).map_or(1, |i| i + 1)
}

/// Softmax of standard-normal logits with some actions masked out. At least
/// one productive action (any action, on traps) always stays in support.
fn base_policy(
    mdp: &TreeMdp,
    productive_action: &[Vec<bool>],
    mask_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> BasePolicy {
    let probs = mdp
        .states()
        .map(|s| {
            let k = mdp.num_actions(s);
            if k == 0 {
                return Vec::new();
            }
            let logits: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let mut keep: Vec<bool> = (0..k)
                .map(|_| rng.random::<f64>() >= mask_fraction)
                .collect();
            let good = &productive_action[s.0];
            let must: Vec<usize> = if good.iter().any(|&g| g) {
                (0..k).filter(|&a| good[a]).collect()
            } else {
                (0..k).collect()
            };
            if !must.iter().any(|&a| keep[a]) {
                keep[must[rng.random_range(0..must.len())]] = true;
            }
            let max = logits
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&l, _)| l)
                .fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits
                .iter()
                .zip(&keep)
                .map(|(&l, &k)| if k { (l - max).exp() } else { 0.0 })
                .collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|x| x / z).collect()
        })
        .collect();
    BasePolicy { probs }
}

#![allow(dead_code)]

use rand::Rng;

use treemdp::{ActionId, StateId, StochasticPolicy, TreeMdp};

pub const GAMMA: f64 = 0.95;

/// Random tree MDP with `n` states, arbitrary child sets (cycles included)
/// and at least one building block.
pub fn random_mdp<R: Rng>(
    rng: &mut R,
    n: usize,
    max_actions: usize,
    max_children: usize,
) -> TreeMdp {
    assert!(n >= 2);
    let mut bb: Vec<bool> = (0..n).map(|_| rng.random_bool(0.35)).collect();
    if !bb.iter().any(|&b| b) {
        bb[rng.random_range(0..n)] = true;
    }
    if bb.iter().all(|&b| b) {
        bb[0] = false;
    }
    let transitions = (0..n)
        .map(|s| {
            if bb[s] {
                return Vec::new();
            }
            (0..rng.random_range(1..=max_actions))
                .map(|_| {
                    (0..rng.random_range(1..=max_children))
                        .map(|_| StateId(rng.random_range(0..n)))
                        .collect()
                })
                .collect()
        })
        .collect();
    TreeMdp::new(transitions, bb, GAMMA).expect("random MDP is well formed")
}

/// Random MDP with exactly `k` non-terminal states plus `bbs` building blocks.
pub fn random_mdp_split<R: Rng>(
    rng: &mut R,
    k: usize,
    bbs: usize,
    max_actions: usize,
    max_children: usize,
) -> TreeMdp {
    let n = k + bbs;
    let bb: Vec<bool> = (0..n).map(|s| s >= k).collect();
    let transitions = (0..n)
        .map(|s| {
            if bb[s] {
                return Vec::new();
            }
            (0..rng.random_range(1..=max_actions))
                .map(|_| {
                    (0..rng.random_range(1..=max_children))
                        .map(|_| StateId(rng.random_range(0..n)))
                        .collect()
                })
                .collect()
        })
        .collect();
    TreeMdp::new(transitions, bb, GAMMA).expect("random MDP is well formed")
}

/// Random stochastic policy; each action outside a kept one is dropped from
/// the support with probability `drop`.
pub fn random_policy<R: Rng>(rng: &mut R, mdp: &TreeMdp, drop: f64) -> StochasticPolicy {
    let mut probs = Vec::new();
    let mut support = Vec::new();
    for s in mdp.states() {
        let k = mdp.num_actions(s);
        let keep = if k > 0 { rng.random_range(0..k) } else { 0 };
        let mask: Vec<bool> = (0..k)
            .map(|a| a == keep || !rng.random_bool(drop))
            .collect();
        let raw: Vec<f64> = mask
            .iter()
            .map(|&m| if m { rng.random_range(0.05..1.0) } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        probs.push(raw.iter().map(|p| p / z).collect());
        support.push(mask);
    }
    StochasticPolicy::new(probs, support).expect("random policy is valid")
}

pub fn random_choice<R: Rng>(rng: &mut R, mdp: &TreeMdp) -> Vec<ActionId> {
    mdp.states()
        .map(|s| ActionId(rng.random_range(0..mdp.num_actions(s).max(1))))
        .collect()
}

pub fn random_values<R: Rng>(rng: &mut R, n: usize) -> treemdp::ValueTable {
    treemdp::ValueTable((0..n).map(|_| rng.random::<f64>()).collect())
}

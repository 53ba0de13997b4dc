//! Brute-force ground truth for small instances.
//!
//! Nothing here calls the value-iteration or policy-evaluation sweeps; the
//! optimal values come from enumerating deterministic policies and solving
//! each one by direct recursion over the realised decomposition graph.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId, TreeMdp};
use crate::self_imitation::explore;
use crate::values::{
    evaluate_policy, iteration_cap, tree_worst_path_return, StochasticPolicy, ValueTable,
};

pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Rollout cap used by the Monte Carlo estimator.
pub const MC_MAX_STEPS: usize = 100_000;
/// Tolerance that fixes the oracle's cycle cutoff depth.
pub const ORACLE_TOL: f64 = 1e-10;

/// Every assignment of a feasible action to each non-terminal state, in
/// odometer order with state 0 varying fastest.
#[derive(Debug, Clone)]
pub struct DeterministicPolicyEnumeration {
    radix: Vec<usize>,
    current: Option<Vec<ActionId>>,
}

impl DeterministicPolicyEnumeration {
    pub fn new(mdp: &TreeMdp) -> Self {
        let radix: Vec<usize> = mdp.states().map(|s| mdp.num_actions(s).max(1)).collect();
        Self {
            current: Some(vec![ActionId(0); radix.len()]),
            radix,
        }
    }

    pub fn count(mdp: &TreeMdp) -> u128 {
        mdp.states()
            .map(|s| mdp.num_actions(s).max(1) as u128)
            .fold(1u128, |acc, k| acc.saturating_mul(k))
    }
}

impl Iterator for DeterministicPolicyEnumeration {
    type Item = Vec<ActionId>;

    fn next(&mut self) -> Option<Self::Item> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut carried = true;
        for (slot, &r) in next.iter_mut().zip(&self.radix) {
            if slot.0 + 1 < r {
                slot.0 += 1;
                carried = false;
                break;
            }
            slot.0 = 0;
        }
        self.current = if carried { None } else { Some(next) };
        Some(out)
    }
}

/// Values of a deterministic policy by memoised depth-first recursion.
/// A path longer than the cutoff depth (in particular any cycle) is worth 0.
pub fn deterministic_values(mdp: &TreeMdp, choice: &[ActionId], cutoff: usize) -> Vec<f64> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        OnStack,
        Done(f64),
    }
    fn visit(
        mdp: &TreeMdp,
        choice: &[ActionId],
        s: StateId,
        depth: usize,
        cutoff: usize,
        marks: &mut [Mark],
    ) -> f64 {
        if mdp.is_building_block(s) {
            return 1.0;
        }
        match marks[s.0] {
            Mark::Done(v) => return v,
            Mark::OnStack => return 0.0,
            Mark::New => {}
        }
        if depth > cutoff {
            return 0.0;
        }
        marks[s.0] = Mark::OnStack;
        let mut worst = f64::INFINITY;
        for &c in mdp.children(s, choice[s.0]) {
            worst = worst.min(visit(mdp, choice, c, depth + 1, cutoff, marks));
        }
        let v = mdp.gamma() * worst;
        marks[s.0] = Mark::Done(v);
        v
    }
    let mut marks = vec![Mark::New; mdp.num_states()];
    mdp.states()
        .map(|s| visit(mdp, choice, s, 0, cutoff, &mut marks))
        .collect()
}

/// Optimal values as the per-state maximum over all deterministic policies.
pub fn brute_force_v_star(mdp: &TreeMdp) -> Result<ValueTable> {
    let count = DeterministicPolicyEnumeration::count(mdp);
    if count > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let cutoff = iteration_cap(mdp.gamma(), ORACLE_TOL) - 64;
    let mut best = vec![0.0f64; mdp.num_states()];
    for choice in DeterministicPolicyEnumeration::new(mdp) {
        for (b, v) in best
            .iter_mut()
            .zip(deterministic_values(mdp, &choice, cutoff))
        {
            *b = b.max(v);
        }
    }
    Ok(ValueTable(best))
}

/// Sample mean and standard error of the worst-path return of `n` rollouts.
pub fn monte_carlo_objective<R: Rng + ?Sized>(
    mdp: &TreeMdp,
    pi: &StochasticPolicy,
    root: StateId,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let tree = explore(mdp, pi, root, MC_MAX_STEPS, rng)?;
        samples.push(tree_worst_path_return(&tree, mdp));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if samples.iter().all(|&x| x == samples[0]) {
        return Ok((samples[0], 0.0));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub holds: bool,
    /// State with the largest value drop, if any state dropped at all.
    pub worst_state: Option<StateId>,
    /// `V_before - V_after` at `worst_state`.
    pub worst_drop: f64,
}

pub fn check_improvement(
    mdp: &TreeMdp,
    before: &StochasticPolicy,
    after: &StochasticPolicy,
    tol: f64,
) -> Result<ImprovementReport> {
    let vb = evaluate_policy(mdp, before, ORACLE_TOL)?;
    let va = evaluate_policy(mdp, after, ORACLE_TOL)?;
    let mut worst: Option<(StateId, f64)> = None;
    for s in mdp.states() {
        let drop = vb.get(s) - va.get(s);
        if drop > 0.0 && worst.is_none_or(|(_, d)| drop > d) {
            worst = Some((s, drop));
        }
    }
    let worst_drop = worst.map_or(0.0, |w| w.1);
    Ok(ImprovementReport {
        holds: worst_drop <= tol,
        worst_state: worst.map(|w| w.0),
        worst_drop,
    })
}

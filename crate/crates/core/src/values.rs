//! Exact worst-path value machinery.
//!
//! Every backup here has the same shape: a building block is worth 1, any
//! other state is worth `gamma` times the worst child of the chosen action.
//! Sweeps are Jacobi style, reading only the previous table.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Path, StateId, TreeMdp};
use crate::self_imitation::{NodeStatus, SynTree};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Per-state scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// The reward vector: 1 on building blocks, 0 elsewhere.
    pub fn rewards(mdp: &TreeMdp) -> Self {
        Self(mdp.states().map(|s| mdp.reward_unchecked(s)).collect())
    }

    pub fn get(&self, s: StateId) -> f64 {
        self.0[s.0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `state,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,value\n");
        for (s, v) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{s},{v}");
        }
        out
    }
}

/// Action probabilities per state plus the support mask they must respect.
/// Terminal states carry empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    probs: Vec<Vec<f64>>,
    support: Vec<Vec<bool>>,
}

const PROB_SUM_TOL: f64 = 1e-9;

impl StochasticPolicy {
    pub fn new(probs: Vec<Vec<f64>>, support: Vec<Vec<bool>>) -> Result<Self> {
        if probs.len() != support.len() {
            return Err(Error::InvalidPolicy(format!(
                "{} probability rows but {} support rows",
                probs.len(),
                support.len()
            )));
        }
        for (s, (p, m)) in probs.iter().zip(&support).enumerate() {
            if p.len() != m.len() {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: mask length mismatch"
                )));
            }
            if p.is_empty() {
                continue;
            }
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: negative or non-finite probability"
                )));
            }
            if p.iter().zip(m).any(|(&x, &allowed)| x > 0.0 && !allowed) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: mass outside support"
                )));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(Self { probs, support })
    }

    /// Uniform over all feasible actions, full support.
    pub fn uniform(mdp: &TreeMdp) -> Self {
        let probs = mdp
            .states()
            .map(|s| {
                let k = mdp.num_actions(s);
                vec![1.0 / k as f64; k]
            })
            .collect();
        Self {
            probs,
            support: full_support(mdp),
        }
    }

    /// Probability one on `choice[s]`, full support.
    pub fn deterministic(mdp: &TreeMdp, choice: &[ActionId]) -> Self {
        let probs = mdp
            .states()
            .map(|s| {
                let mut row = vec![0.0; mdp.num_actions(s)];
                if let Some(slot) = row.get_mut(choice[s.0].0) {
                    *slot = 1.0;
                }
                row
            })
            .collect();
        Self {
            probs,
            support: full_support(mdp),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self, s: StateId) -> &[f64] {
        &self.probs[s.0]
    }

    pub fn prob(&self, s: StateId, a: ActionId) -> f64 {
        self.probs[s.0][a.0]
    }

    pub fn support(&self, s: StateId) -> &[bool] {
        &self.support[s.0]
    }

    pub fn support_mask(&self) -> &[Vec<bool>] {
        &self.support
    }

    pub fn in_support(&self, s: StateId, a: ActionId) -> bool {
        self.support[s.0].get(a.0).copied().unwrap_or(false)
    }

    /// Same support, new probabilities. Used by updates that already
    /// guarantee normalisation and support.
    pub(crate) fn with_probs(&self, probs: Vec<Vec<f64>>) -> Self {
        Self {
            probs,
            support: self.support.clone(),
        }
    }

    /// Highest-probability action, ties to the lowest id. `None` on terminals.
    pub fn argmax_action(&self, s: StateId) -> Option<ActionId> {
        argmax_first(self.probs[s.0].iter().copied()).map(ActionId)
    }

    /// Checks shape against `mdp`: one row per state, one entry per action.
    pub fn check_shape(&self, mdp: &TreeMdp) -> Result<()> {
        if self.probs.len() != mdp.num_states() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, MDP has {}",
                self.probs.len(),
                mdp.num_states()
            )));
        }
        for s in mdp.states() {
            if self.probs[s.0].len() != mdp.num_actions(s) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: wrong action count"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn full_support(mdp: &TreeMdp) -> Vec<Vec<bool>> {
    mdp.states()
        .map(|s| vec![true; mdp.num_actions(s)])
        .collect()
}

/// Index of the first maximum.
pub(crate) fn argmax_first(xs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in xs.enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Sweep cap for a contraction with rate `gamma` to reach `tol`.
pub fn iteration_cap(gamma: f64, tol: f64) -> usize {
    (tol.ln() / gamma.ln()).ceil().max(0.0) as usize + 64
}

fn min_child(mdp: &TreeMdp, v: &[f64], s: StateId, a: ActionId) -> f64 {
    mdp.children(s, a)
        .iter()
        .map(|c| v[c.0])
        .fold(f64::INFINITY, f64::min)
}

/// `gamma^T * r(s_T)` for a path with `T` actions.
pub fn path_return(path: &Path, mdp: &TreeMdp) -> Result<f64> {
    path.check(mdp)?;
    let last = *path.states.last().expect("checked paths are non-empty");
    if !mdp.is_building_block(last) {
        return Ok(0.0);
    }
    Ok((0..path.len()).fold(1.0, |acc, _| mdp.gamma() * acc))
}

/// Minimum path return over all root-to-leaf paths of a realised tree.
/// Unexpanded leaves are worth 0.
pub fn tree_worst_path_return(tree: &SynTree, mdp: &TreeMdp) -> f64 {
    let nodes = tree.nodes();
    let mut value = vec![0.0; nodes.len()];
    // Children always have larger indices than their parent.
    for (i, node) in nodes.iter().enumerate().rev() {
        value[i] = match node.status {
            NodeStatus::BuildingBlock => 1.0,
            NodeStatus::Unexpanded => 0.0,
            NodeStatus::Expanded => {
                let worst = node
                    .children
                    .iter()
                    .map(|&c| value[c])
                    .fold(f64::INFINITY, f64::min);
                mdp.gamma() * worst
            }
        };
    }
    value[tree.root()]
}

/// `r(s) + gamma (1 - r(s)) min_{s' in T(s,a)} V(s')`.
pub fn q_value(mdp: &TreeMdp, v: &ValueTable, s: StateId, a: ActionId) -> Result<f64> {
    mdp.check_state(s)?;
    if mdp.is_building_block(s) {
        return Ok(1.0);
    }
    let worst = mdp
        .expand(s, a)?
        .iter()
        .map(|c| v.get(*c))
        .fold(f64::INFINITY, f64::min);
    Ok(mdp.gamma() * worst)
}

pub fn advantage(mdp: &TreeMdp, v: &ValueTable, s: StateId, a: ActionId) -> Result<f64> {
    Ok(q_value(mdp, v, s, a)? - v.get(s))
}

/// Advantages of every feasible action at every state, terminals empty.
pub fn advantage_table(mdp: &TreeMdp, v: &ValueTable) -> Vec<Vec<f64>> {
    mdp.states()
        .map(|s| {
            mdp.actions(s)
                .map(|a| mdp.gamma() * min_child(mdp, &v.0, s, a) - v.get(s))
                .collect()
        })
        .collect()
}

/// Fixed point of the policy recursion, iterated from the reward vector.
pub fn evaluate_policy(mdp: &TreeMdp, pi: &StochasticPolicy, tol: f64) -> Result<ValueTable> {
    pi.check_shape(mdp)?;
    let gamma = mdp.gamma();
    iterate(mdp, ValueTable::rewards(mdp), tol, |s, v| {
        let expected: f64 = pi
            .probs(s)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(a, &p)| p * min_child(mdp, v, s, ActionId(a)))
            .sum();
        gamma * expected
    })
}

/// One application of the worst-path Bellman optimality operator.
pub fn bellman_optimal_backup(mdp: &TreeMdp, v: &ValueTable) -> ValueTable {
    let mut out = vec![0.0; v.len()];
    optimal_sweep(mdp, &v.0, &mut out);
    ValueTable(out)
}

fn optimal_sweep(mdp: &TreeMdp, v: &[f64], out: &mut [f64]) {
    let gamma = mdp.gamma();
    for s in mdp.states() {
        out[s.0] = if mdp.is_building_block(s) {
            1.0
        } else {
            gamma * best_min_child(mdp, v, s)
        };
    }
}

fn best_min_child(mdp: &TreeMdp, v: &[f64], s: StateId) -> f64 {
    mdp.actions(s)
        .map(|a| min_child(mdp, v, s, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal values by value iteration from the reward vector.
pub fn value_iteration(mdp: &TreeMdp, tol: f64) -> Result<ValueTable> {
    value_iteration_from(mdp, ValueTable::rewards(mdp), tol)
}

pub fn value_iteration_from(mdp: &TreeMdp, init: ValueTable, tol: f64) -> Result<ValueTable> {
    if init.len() != mdp.num_states() {
        return Err(Error::InvalidConfig(format!(
            "initial table has {} entries for {} states",
            init.len(),
            mdp.num_states()
        )));
    }
    iterate(mdp, init, tol, |s, v| {
        mdp.gamma() * best_min_child(mdp, v, s)
    })
}

fn iterate(
    mdp: &TreeMdp,
    init: ValueTable,
    tol: f64,
    backup: impl Fn(StateId, &[f64]) -> f64,
) -> Result<ValueTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let cap = iteration_cap(mdp.gamma(), tol);
    let mut current = init.0;
    let mut next = vec![0.0; current.len()];
    let mut change = f64::INFINITY;
    for _ in 0..cap {
        for s in mdp.states() {
            next[s.0] = if mdp.is_building_block(s) {
                1.0
            } else {
                backup(s, &current)
            };
        }
        change = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        if change < tol {
            return Ok(ValueTable(current));
        }
    }
    Err(Error::Convergence {
        iterations: cap,
        last_change: change,
    })
}

/// Deterministic greedy policy: argmax over actions of the worst child
/// value, ties to the lowest action id. Full support.
pub fn greedy_policy(mdp: &TreeMdp, v: &ValueTable) -> StochasticPolicy {
    let choice: Vec<ActionId> = mdp
        .states()
        .map(|s| {
            argmax_first(mdp.actions(s).map(|a| min_child(mdp, &v.0, s, a)))
                .map_or(ActionId(0), ActionId)
        })
        .collect();
    StochasticPolicy::deterministic(mdp, &choice)
}

/// Greedy policy restricted to actions inside `support`. States whose support
/// is empty fall back to the unconstrained argmax. The returned policy keeps
/// `support` as its mask.
pub fn greedy_policy_within(
    mdp: &TreeMdp,
    v: &ValueTable,
    support: &[Vec<bool>],
) -> StochasticPolicy {
    let probs = mdp
        .states()
        .map(|s| {
            let k = mdp.num_actions(s);
            let allowed = &support[s.0];
            let scores = mdp.actions(s).map(|a| {
                if allowed[a.0] {
                    min_child(mdp, &v.0, s, a)
                } else {
                    f64::NEG_INFINITY
                }
            });
            let mut row = vec![0.0; k];
            if let Some(best) = argmax_first(scores) {
                row[best] = 1.0;
            }
            row
        })
        .collect();
    StochasticPolicy {
        probs,
        support: support.to_vec(),
    }
}

/// Route depth implied by a worst-path value: `log v / log gamma`.
pub fn estimated_depth(v: f64, gamma: f64) -> Result<f64> {
    if !(v > 0.0) || v > 1.0 {
        return Err(Error::UndefinedDepth(v));
    }
    if v == 1.0 {
        return Ok(0.0);
    }
    Ok(v.ln() / gamma.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, figure3};

    const G: f64 = 0.95;

    #[test]
    fn path_return_cases() {
        let mdp =
            TreeMdp::new(vec![vec![vec![StateId(1)]], vec![]], vec![false, true], 0.9).unwrap();
        let p = Path::new(vec![StateId(0), StateId(1)], vec![ActionId(0)]);
        assert_eq!(path_return(&p, &mdp).unwrap(), 0.9);
        let stub = Path::new(vec![StateId(0)], vec![]);
        assert_eq!(path_return(&stub, &mdp).unwrap(), 0.0);
        let broken = Path::new(vec![StateId(0), StateId(0)], vec![ActionId(0)]);
        assert!(matches!(path_return(&broken, &mdp), Err(Error::Path(_))));
    }

    #[test]
    fn figure3_longest_path_return() {
        let mdp = figure3::mdp(G);
        let p = figure3::path(&["A", "B", "E", "G", "H"], &[0, 0, 0, 0]);
        assert_eq!(path_return(&p, &mdp).unwrap(), G * G * G * G);
    }

    #[test]
    fn q_value_cases() {
        // s0 -> [s1, s2, s3]; children valued 0.9, 0.5, 0.81.
        let mdp = TreeMdp::new(
            vec![
                vec![vec![StateId(1), StateId(2), StateId(3)]],
                vec![vec![StateId(4)]],
                vec![vec![StateId(4)]],
                vec![vec![StateId(4)]],
                vec![],
            ],
            vec![false, false, false, false, true],
            0.9,
        )
        .unwrap();
        let v = ValueTable(vec![0.4, 0.9, 0.5, 0.81, 1.0]);
        let q = q_value(&mdp, &v, StateId(0), ActionId(0)).unwrap();
        assert!((q - 0.45).abs() < 1e-15);
        assert_eq!(q_value(&mdp, &v, StateId(4), ActionId(0)).unwrap(), 1.0);
        let dead = ValueTable(vec![0.4, 0.9, 0.0, 0.81, 1.0]);
        assert_eq!(q_value(&mdp, &dead, StateId(0), ActionId(0)).unwrap(), 0.0);
        assert!(matches!(
            q_value(&mdp, &v, StateId(0), ActionId(1)),
            Err(Error::InfeasibleAction { .. })
        ));

        let adv = advantage(&mdp, &v, StateId(0), ActionId(0)).unwrap();
        assert!((adv - 0.05).abs() < 1e-12);
        let consistent = ValueTable(vec![q, 0.9, 0.5, 0.81, 1.0]);
        assert_eq!(
            advantage(&mdp, &consistent, StateId(0), ActionId(0)).unwrap(),
            0.0
        );
        assert_eq!(advantage(&mdp, &v, StateId(4), ActionId(0)).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_left_tree_policy() {
        let mdp = figure3::mdp(G);
        let pi = figure3::left_tree_policy(&mdp);
        let v = evaluate_policy(&mdp, &pi, DEFAULT_TOL).unwrap();
        assert_eq!(v.get(figure3::id("A")), G * G * G * G);
        for s in mdp.building_blocks() {
            assert_eq!(v.get(s), 1.0);
        }
    }

    #[test]
    fn evaluate_mixed_policy_five_states() {
        let (mdp, pi) = fixtures::half_dead_end(G);
        let v = evaluate_policy(&mdp, &pi, DEFAULT_TOL).unwrap();
        assert_eq!(v.get(StateId(1)), G);
        // Frozen by hand: 0.5 * 0.95 * 0.95.
        assert!((v.get(StateId(0)) - 0.45125).abs() < 1e-12);
    }

    #[test]
    fn backup_of_zero_is_reward() {
        let mdp = figure3::mdp(G);
        let b = bellman_optimal_backup(&mdp, &ValueTable::zeros(mdp.num_states()));
        assert_eq!(b, ValueTable::rewards(&mdp));
    }

    #[test]
    fn value_iteration_fixed_point_and_inits() {
        let mdp = figure3::mdp(G);
        let v = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert!(bellman_optimal_backup(&mdp, &v).sup_distance(&v) < 1e-12);
        // A -> [C] alone beats the deep route.
        assert_eq!(v.get(figure3::id("A")), G);
        let from_ones =
            value_iteration_from(&mdp, ValueTable::ones(mdp.num_states()), 1e-12).unwrap();
        let from_zeros =
            value_iteration_from(&mdp, ValueTable::zeros(mdp.num_states()), 1e-12).unwrap();
        assert!(from_ones.sup_distance(&from_zeros) < 1e-9);
    }

    #[test]
    fn one_step_solve() {
        let mdp =
            TreeMdp::new(vec![vec![vec![StateId(1)]], vec![]], vec![false, true], 0.8).unwrap();
        assert_eq!(
            value_iteration(&mdp, DEFAULT_TOL).unwrap().0,
            vec![0.8, 1.0]
        );
    }

    #[test]
    fn greedy_ties_and_support() {
        let mdp = TreeMdp::new(
            vec![
                vec![vec![StateId(1)], vec![StateId(1)], vec![StateId(2)]],
                vec![],
                vec![vec![StateId(2)]],
            ],
            vec![false, true, false],
            0.9,
        )
        .unwrap();
        let v = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        let greedy = greedy_policy(&mdp, &v);
        assert_eq!(greedy.argmax_action(StateId(0)), Some(ActionId(0)));

        let support = vec![vec![false, true, true], vec![], vec![true]];
        let constrained = greedy_policy_within(&mdp, &v, &support);
        assert_eq!(constrained.argmax_action(StateId(0)), Some(ActionId(1)));
        let support = vec![vec![false, false, true], vec![], vec![true]];
        let constrained = greedy_policy_within(&mdp, &v, &support);
        assert_eq!(constrained.argmax_action(StateId(0)), Some(ActionId(2)));
    }

    #[test]
    fn greedy_is_optimal_on_figure3() {
        let mdp = figure3::mdp(G);
        let v = value_iteration(&mdp, DEFAULT_TOL).unwrap();
        let back = evaluate_policy(&mdp, &greedy_policy(&mdp, &v), DEFAULT_TOL).unwrap();
        assert!(back.sup_distance(&v) < 1e-9);
    }

    #[test]
    fn depth_estimates() {
        assert!((estimated_depth(G.powi(4), G).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(estimated_depth(1.0, G).unwrap(), 0.0);
        assert!(matches!(
            estimated_depth(0.0, G),
            Err(Error::UndefinedDepth(_))
        ));
    }

    #[test]
    fn csv_export() {
        let t = ValueTable(vec![0.5, 1.0]);
        assert_eq!(t.to_csv(), "state,value\n0,0.5\n1,1\n");
    }

    #[test]
    fn policy_validation() {
        assert!(StochasticPolicy::new(vec![vec![0.5, 0.5]], vec![vec![true, false]]).is_err());
        assert!(StochasticPolicy::new(vec![vec![0.5, 0.4]], vec![vec![true, true]]).is_err());
        assert!(StochasticPolicy::new(
            vec![vec![1.0, 0.0], vec![]],
            vec![vec![true, false], vec![]]
        )
        .is_ok());
    }
}

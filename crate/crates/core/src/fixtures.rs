//! Small hand-built environments shared by unit tests, integration tests
//! and the acceptance suite.

use crate::mdp::{ActionId, Path, StateId, TreeMdp};
use crate::self_imitation::SynTree;
use crate::values::StochasticPolicy;

/// The eight-molecule example: A is split into B and C, B into D and E,
/// E into F and G, G into H. C, D, F and H are building blocks.
///
/// Two extra actions make the optimal route differ from the drawn one:
/// `A -> [C]` solves A in one step, and `G -> [G]` is an unproductive loop
/// that reproduces the failed tree in which G is never resolved.
pub mod figure3 {
    use super::*;

    pub const NAMES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

    pub fn id(name: &str) -> StateId {
        StateId(
            NAMES
                .iter()
                .position(|n| *n == name)
                .expect("unknown fixture state"),
        )
    }

    fn ids(names: &[&str]) -> Vec<StateId> {
        names.iter().map(|n| id(n)).collect()
    }

    /// Document form of the fixture, as accepted by the environment parser.
    pub const DOCUMENT: &str = "\
# A=0 B=1 C=2 D=3 E=4 F=5 G=6 H=7
states 8 gamma 0.95
bb 2 3 5 7
t 0 0 -> 1 2
t 0 1 -> 2
t 1 0 -> 3 4
t 4 0 -> 5 6
t 6 0 -> 7
t 6 1 -> 6
pi0 0 0.5 0.5
pi0 1 1
pi0 4 1
pi0 6 0.5 0.5
";

    pub fn mdp(gamma: f64) -> TreeMdp {
        let mut t = vec![Vec::new(); 8];
        t[id("A").0] = vec![ids(&["B", "C"]), ids(&["C"])];
        t[id("B").0] = vec![ids(&["D", "E"])];
        t[id("E").0] = vec![ids(&["F", "G"])];
        t[id("G").0] = vec![ids(&["H"]), ids(&["G"])];
        let bb = NAMES
            .iter()
            .map(|n| matches!(*n, "C" | "D" | "F" | "H"))
            .collect();
        TreeMdp::new(t, bb, gamma).expect("fixture is well formed")
    }

    /// Action 0 everywhere: the successful drawn route.
    pub fn left_tree_policy(mdp: &TreeMdp) -> StochasticPolicy {
        StochasticPolicy::deterministic(mdp, &vec![ActionId(0); mdp.num_states()])
    }

    /// The successful route: four decompositions, all leaves building blocks.
    pub fn left_tree(mdp: &TreeMdp) -> SynTree {
        let mut tree = SynTree::new(id("A"), mdp);
        let [b, _c] = expand2(&mut tree, 0, mdp);
        let [_d, e] = expand2(&mut tree, b, mdp);
        let [_f, g] = expand2(&mut tree, e, mdp);
        tree.expand_node(g, ActionId(0), mdp).expect("G -> H");
        tree
    }

    /// The failed route: identical, except G is left unresolved.
    pub fn right_tree(mdp: &TreeMdp) -> SynTree {
        let mut tree = SynTree::new(id("A"), mdp);
        let [b, _c] = expand2(&mut tree, 0, mdp);
        let [_d, e] = expand2(&mut tree, b, mdp);
        expand2(&mut tree, e, mdp);
        tree
    }

    fn expand2(tree: &mut SynTree, node: usize, mdp: &TreeMdp) -> [usize; 2] {
        let r = tree
            .expand_node(node, ActionId(0), mdp)
            .expect("fixture action");
        [r.start, r.start + 1]
    }

    pub fn path(names: &[&str], actions: &[usize]) -> Path {
        Path::new(ids(names), actions.iter().map(|&a| ActionId(a)).collect())
    }
}

/// Five states: the root mixes 50/50 between `1 -> [2]` (worth gamma) and a
/// trap `3` that loops on itself.
pub fn half_dead_end(gamma: f64) -> (TreeMdp, StochasticPolicy) {
    let s = StateId;
    let mdp = TreeMdp::new(
        vec![
            vec![vec![s(1)], vec![s(3)]],
            vec![vec![s(2)]],
            vec![],
            vec![vec![s(3), s(4)]],
            vec![],
        ],
        vec![false, false, true, false, true],
        gamma,
    )
    .expect("fixture is well formed");
    let pi = StochasticPolicy::new(
        vec![vec![0.5, 0.5], vec![1.0], vec![], vec![1.0], vec![]],
        vec![vec![true, true], vec![true], vec![], vec![true], vec![]],
    )
    .expect("fixture policy is valid");
    (mdp, pi)
}

/// A linear chain `0 -> 1 -> ... -> len`, with `len` a building block.
pub fn chain(len: usize, gamma: f64) -> TreeMdp {
    let mut t: Vec<Vec<Vec<StateId>>> = (0..len).map(|i| vec![vec![StateId(i + 1)]]).collect();
    t.push(Vec::new());
    let bb = (0..=len).map(|i| i == len).collect();
    TreeMdp::new(t, bb, gamma).expect("chain is well formed")
}

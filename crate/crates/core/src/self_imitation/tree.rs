use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;

use crate::error::Result;
use crate::mdp::{ActionId, StateId, TreeMdp};
use crate::values::StochasticPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Expanded,
    BuildingBlock,
    /// A non-building-block leaf: never expanded, either because the step
    /// budget ran out or because it repeats one of its ancestors.
    Unexpanded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: StateId,
    pub action: Option<ActionId>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    pub status: NodeStatus,
}

/// A realised synthetic tree. Node 0 is the root and every child index is
/// larger than its parent's.
#[derive(Debug, Clone, PartialEq)]
pub struct SynTree {
    nodes: Vec<TreeNode>,
}

/// One decomposition `(s, a, children)`: the replay unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub state: StateId,
    pub action: ActionId,
    pub children: Vec<StateId>,
}

impl SynTree {
    pub fn new(root: StateId, mdp: &TreeMdp) -> Self {
        Self {
            nodes: vec![leaf(root, None, mdp)],
        }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies `action` at an unexpanded node and appends its children.
    /// Returns the index range of the new nodes.
    pub fn expand_node(
        &mut self,
        node: usize,
        action: ActionId,
        mdp: &TreeMdp,
    ) -> Result<Range<usize>> {
        let state = self.nodes[node].state;
        let children = mdp.expand(state, action)?;
        let start = self.nodes.len();
        self.nodes
            .extend(children.iter().map(|&c| leaf(c, Some(node), mdp)));
        let end = self.nodes.len();
        let n = &mut self.nodes[node];
        n.action = Some(action);
        n.children = (start..end).collect();
        n.status = NodeStatus::Expanded;
        Ok(start..end)
    }

    /// Number of expanded nodes, i.e. decompositions used.
    pub fn num_expanded(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Expanded)
            .count()
    }

    fn has_ancestor_state(&self, node: usize, state: StateId) -> bool {
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            if self.nodes[p].state == state {
                return true;
            }
            cur = self.nodes[p].parent;
        }
        false
    }

    /// Per-node flag: every leaf below is a building block.
    pub fn success_flags(&self) -> Vec<bool> {
        let mut ok = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate().rev() {
            ok[i] = match node.status {
                NodeStatus::BuildingBlock => true,
                NodeStatus::Unexpanded => false,
                NodeStatus::Expanded => node.children.iter().all(|&c| ok[c]),
            };
        }
        ok
    }

    /// Longest root-to-leaf path, counted in actions.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate().rev() {
            depth[i] = node
                .children
                .iter()
                .map(|&c| depth[c] + 1)
                .max()
                .unwrap_or(0);
        }
        depth[0]
    }
}

fn leaf(state: StateId, parent: Option<usize>, mdp: &TreeMdp) -> TreeNode {
    TreeNode {
        state,
        action: None,
        children: Vec::new(),
        parent,
        status: if mdp.is_building_block(state) {
            NodeStatus::BuildingBlock
        } else {
            NodeStatus::Unexpanded
        },
    }
}

/// Samples an action from the policy row of `s`.
pub fn sample_action<R: Rng + ?Sized>(pi: &StochasticPolicy, s: StateId, rng: &mut R) -> ActionId {
    let probs = pi.probs(s);
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = a;
            if u < cum {
                return ActionId(a);
            }
        }
    }
    ActionId(last_positive)
}

/// Breadth-first rollout from `root`: pop a state, pick an action, attach the
/// children, queue the children that are not building blocks. Each
/// expansion is one step; stops when the queue empties or `max_steps` is hit.
/// A child repeating one of its ancestors is attached but never queued.
pub fn explore_with(
    mdp: &TreeMdp,
    root: StateId,
    max_steps: usize,
    mut choose: impl FnMut(StateId) -> ActionId,
) -> Result<SynTree> {
    mdp.check_state(root)?;
    let mut tree = SynTree::new(root, mdp);
    let mut queue = VecDeque::new();
    if !mdp.is_building_block(root) {
        queue.push_back(0);
    }
    let mut steps = 0;
    while steps < max_steps {
        let Some(node) = queue.pop_front() else { break };
        let state = tree.nodes[node].state;
        let action = choose(state);
        let new = tree.expand_node(node, action, mdp)?;
        for child in new {
            let c = &tree.nodes[child];
            if c.status == NodeStatus::Unexpanded && !tree.has_ancestor_state(child, c.state) {
                queue.push_back(child);
            }
        }
        steps += 1;
    }
    Ok(tree)
}

/// Rollout that samples actions from `pi`.
pub fn explore<R: Rng + ?Sized>(
    mdp: &TreeMdp,
    pi: &StochasticPolicy,
    root: StateId,
    max_steps: usize,
    rng: &mut R,
) -> Result<SynTree> {
    pi.check_shape(mdp)?;
    explore_with(mdp, root, max_steps, |s| sample_action(pi, s, rng))
}

/// Whether every leaf under `node` is a building block.
pub fn is_successful(tree: &SynTree, node: usize) -> bool {
    tree.success_flags()[node]
}

/// Branches of every successful subtree, in breadth-first node order.
/// Each expanded node contributes at most once.
pub fn extract_successful_branches(tree: &SynTree) -> Vec<Branch> {
    let ok = tree.success_flags();
    tree.nodes
        .iter()
        .zip(&ok)
        .filter(|(n, &ok)| ok && n.status == NodeStatus::Expanded)
        .map(|(n, _)| Branch {
            state: n.state,
            action: n.action.expect("expanded nodes carry an action"),
            children: n.children.iter().map(|&c| tree.nodes[c].state).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fixtures::{chain, figure3};
    use crate::values::tree_worst_path_return;

    const G: f64 = 0.95;

    #[test]
    fn figure3_trees() {
        let mdp = figure3::mdp(G);
        let left = figure3::left_tree(&mdp);
        let right = figure3::right_tree(&mdp);
        assert_eq!(tree_worst_path_return(&left, &mdp), G * G * G * G);
        assert_eq!(tree_worst_path_return(&right, &mdp), 0.0);
        assert!(is_successful(&left, 0));
        assert!(!is_successful(&right, 0));
        let c_node = right.node(0).children[1];
        assert_eq!(right.node(c_node).state, figure3::id("C"));
        assert!(is_successful(&right, c_node));
        assert_eq!(left.depth(), 4);
    }

    #[test]
    fn branches_of_figure3_trees() {
        let mdp = figure3::mdp(G);
        let left = extract_successful_branches(&figure3::left_tree(&mdp));
        assert_eq!(left.len(), 4);
        assert_eq!(left[0].state, figure3::id("A"));
        assert_eq!(left[0].children, vec![figure3::id("B"), figure3::id("C")]);
        // Only leaves are successful in the failed tree.
        assert!(extract_successful_branches(&figure3::right_tree(&mdp)).is_empty());
    }

    #[test]
    fn explore_building_block_root() {
        let mdp = figure3::mdp(G);
        let pi = figure3::left_tree_policy(&mdp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = explore(&mdp, &pi, figure3::id("C"), 10, &mut rng).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.node(0).status, NodeStatus::BuildingBlock);
        assert_eq!(tree.num_expanded(), 0);
    }

    #[test]
    fn explore_deterministic_reproduces_left_tree() {
        let mdp = figure3::mdp(G);
        let pi = figure3::left_tree_policy(&mdp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = explore(&mdp, &pi, figure3::id("A"), 7, &mut rng).unwrap();
        assert!(is_successful(&tree, 0));
        assert_eq!(tree.num_expanded(), 4);
        assert_eq!(tree_worst_path_return(&tree, &mdp), G * G * G * G);
    }

    #[test]
    fn explore_step_cap() {
        // Two levels: 0 -> [1, 2], 1 -> [3], 2 -> [3].
        let mdp = TreeMdp::new(
            vec![
                vec![vec![StateId(1), StateId(2)]],
                vec![vec![StateId(3)]],
                vec![vec![StateId(3)]],
                vec![],
            ],
            vec![false, false, false, true],
            G,
        )
        .unwrap();
        let tree = explore_with(&mdp, StateId(0), 1, |_| ActionId(0)).unwrap();
        assert_eq!(tree.num_expanded(), 1);
        let unexpanded = tree
            .nodes()
            .iter()
            .filter(|n| n.status == NodeStatus::Unexpanded)
            .count();
        assert_eq!(unexpanded, 2);
        assert!(!is_successful(&tree, 0));
    }

    #[test]
    fn explore_cycle_guard_marks_repeat_unexpanded() {
        let mdp = figure3::mdp(G);
        // G takes its self-loop.
        let tree = explore_with(&mdp, figure3::id("G"), 100, |_| ActionId(1)).unwrap();
        assert_eq!(tree.num_expanded(), 1);
        assert_eq!(tree.node(1).status, NodeStatus::Unexpanded);
        assert_eq!(tree_worst_path_return(&tree, &mdp), 0.0);
    }

    #[test]
    fn chain_branches_in_bfs_order() {
        let mdp = chain(3, G);
        let tree = explore_with(&mdp, StateId(0), 10, |_| ActionId(0)).unwrap();
        let states: Vec<_> = extract_successful_branches(&tree)
            .iter()
            .map(|b| b.state.0)
            .collect();
        assert_eq!(states, vec![0, 1, 2]);
    }
}

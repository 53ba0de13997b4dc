//! Tree-structured MDPs.
//!
//! A state is decomposed by an action into an ordered list of child states,
//! every one of which must itself be resolved. Building blocks are the only
//! terminal states and the only states that carry reward.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

/// Index of an action within the feasible list of one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One broken structural invariant, located by state and (optionally) action.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BuildingBlockHasActions {
        state: StateId,
    },
    NoActions {
        state: StateId,
    },
    EmptyChildren {
        state: StateId,
        action: ActionId,
    },
    ChildOutOfRange {
        state: StateId,
        action: ActionId,
        child: usize,
    },
    BadGamma {
        gamma: f64,
    },
    FlagCount {
        flags: usize,
        num_states: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BuildingBlockHasActions { state } => {
                write!(f, "building block {state} has feasible actions")
            }
            Violation::NoActions { state } => {
                write!(
                    f,
                    "non-building-block state {state} has no feasible actions"
                )
            }
            Violation::EmptyChildren { state, action } => {
                write!(f, "({state}, {action}) has an empty child list")
            }
            Violation::ChildOutOfRange {
                state,
                action,
                child,
            } => {
                write!(f, "({state}, {action}) references unknown state {child}")
            }
            Violation::BadGamma { gamma } => write!(f, "gamma {gamma} not in (0, 1)"),
            Violation::FlagCount { flags, num_states } => {
                write!(f, "{flags} building-block flags for {num_states} states")
            }
        }
    }
}

/// Immutable tree MDP. Actions of a state are the dense range
/// `0..num_actions(s)`; `transitions[s][a]` is the ordered child list.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMdp {
    transitions: Vec<Vec<Vec<StateId>>>,
    building_block: Vec<bool>,
    gamma: f64,
}

impl TreeMdp {
    /// Builds and validates an MDP.
    pub fn new(
        transitions: Vec<Vec<Vec<StateId>>>,
        building_block: Vec<bool>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::from_parts_unchecked(transitions, building_block, gamma);
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    /// Builds an MDP without checking invariants. Callers are expected to run
    /// [`TreeMdp::validate`] before relying on it.
    pub fn from_parts_unchecked(
        transitions: Vec<Vec<Vec<StateId>>>,
        building_block: Vec<bool>,
        gamma: f64,
    ) -> Self {
        Self {
            transitions,
            building_block,
            gamma,
        }
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states()).map(StateId)
    }

    pub fn num_actions(&self, s: StateId) -> usize {
        self.transitions.get(s.0).map_or(0, Vec::len)
    }

    pub fn actions(&self, s: StateId) -> impl Iterator<Item = ActionId> {
        (0..self.num_actions(s)).map(ActionId)
    }

    pub fn is_building_block(&self, s: StateId) -> bool {
        self.building_block.get(s.0).copied().unwrap_or(false)
    }

    pub fn building_blocks(&self) -> impl Iterator<Item = StateId> + '_ {
        self.states().filter(|&s| self.is_building_block(s))
    }

    pub fn check_state(&self, s: StateId) -> Result<()> {
        if s.0 < self.num_states() {
            Ok(())
        } else {
            Err(Error::InvalidState {
                state: s.0,
                num_states: self.num_states(),
            })
        }
    }

    /// Binary reward: 1 on building blocks, 0 elsewhere.
    pub fn reward(&self, s: StateId) -> Result<f64> {
        self.check_state(s)?;
        Ok(if self.building_block[s.0] { 1.0 } else { 0.0 })
    }

    /// Child list of `(s, a)` in stored order.
    pub fn expand(&self, s: StateId, a: ActionId) -> Result<&[StateId]> {
        self.check_state(s)?;
        if self.building_block[s.0] {
            return Err(Error::TerminalState(s));
        }
        self.transitions[s.0]
            .get(a.0)
            .map(Vec::as_slice)
            .ok_or(Error::InfeasibleAction {
                state: s,
                action: a,
            })
    }

    /// Unchecked child list for hot loops over valid `(s, a)` pairs.
    pub(crate) fn children(&self, s: StateId, a: ActionId) -> &[StateId] {
        &self.transitions[s.0][a.0]
    }

    pub(crate) fn reward_unchecked(&self, s: StateId) -> f64 {
        if self.building_block[s.0] {
            1.0
        } else {
            0.0
        }
    }

    /// Lists every broken invariant; empty means the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.num_states();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(Violation::BadGamma { gamma: self.gamma });
        }
        if self.building_block.len() != n {
            out.push(Violation::FlagCount {
                flags: self.building_block.len(),
                num_states: n,
            });
        }
        for (s, actions) in self.transitions.iter().enumerate() {
            let state = StateId(s);
            let bb = self.building_block.get(s).copied().unwrap_or(false);
            if bb && !actions.is_empty() {
                out.push(Violation::BuildingBlockHasActions { state });
            }
            if !bb && actions.is_empty() {
                out.push(Violation::NoActions { state });
            }
            for (a, children) in actions.iter().enumerate() {
                let action = ActionId(a);
                if children.is_empty() {
                    out.push(Violation::EmptyChildren { state, action });
                }
                for c in children.iter().filter(|c| c.0 >= n) {
                    out.push(Violation::ChildOutOfRange {
                        state,
                        action,
                        child: c.0,
                    });
                }
            }
        }
        out
    }
}

/// A root-to-leaf path `s_0, a_0, s_1, ..., s_T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
}

impl Path {
    pub fn new(states: Vec<StateId>, actions: Vec<ActionId>) -> Self {
        Self { states, actions }
    }

    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Checks that every step follows a transition of `mdp`.
    pub fn check(&self, mdp: &TreeMdp) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::Path(format!(
                "{} states for {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        for (t, (&a, pair)) in self.actions.iter().zip(self.states.windows(2)).enumerate() {
            let children = mdp
                .expand(pair[0], a)
                .map_err(|e| Error::Path(format!("step {t}: {e}")))?;
            if !children.contains(&pair[1]) {
                return Err(Error::Path(format!(
                    "step {t}: {} is not a child of ({}, {})",
                    pair[1], pair[0], a
                )));
            }
        }
        if let Some(&last) = self.states.last() {
            mdp.check_state(last)
                .map_err(|e| Error::Path(e.to_string()))?;
        }
        Ok(())
    }
}

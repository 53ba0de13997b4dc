use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::{ActionId, StateId, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} out of bounds for an MDP with {num_states} states")]
    InvalidState { state: usize, num_states: usize },

    #[error("action {action} is not feasible at state {state}")]
    InfeasibleAction { state: StateId, action: ActionId },

    #[error("state {0} is a building block and cannot be expanded")]
    TerminalState(StateId),

    #[error("invalid tree MDP: {}", format_violations(.0))]
    InvalidMdp(Vec<Violation>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("inconsistent path: {0}")]
    Path(String),

    #[error("no convergence after {iterations} sweeps (last change {last_change:e})")]
    Convergence { iterations: usize, last_change: f64 },

    #[error("depth is undefined for value {0} (dead end)")]
    UndefinedDepth(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("environment generation failed: {0}")]
    GenerationFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    #[error("action {action} at state {state} lies outside the base policy support")]
    SupportViolation { state: StateId, action: ActionId },

    #[error("policy at state {0} has no probability mass left after reweighting")]
    DegeneratePolicy(StateId),

    #[error("enumeration of {count} deterministic policies exceeds the guard of {limit}")]
    SizeGuard { count: u128, limit: u128 },

    #[error("tree is not successful at its root")]
    NotSolved,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

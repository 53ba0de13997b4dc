//! Worst-path optimisation in tree-structured MDPs.
//!
//! A target state is decomposed by actions into sets of child states until
//! every leaf is a building block. A route is only as good as its deepest
//! branch: its return is `gamma^T` for the longest root-to-leaf path, and 0
//! if any leaf is unresolved.
//!
//! - [`mdp`]: the MDP and its primitive queries.
//! - [`env_gen`] / [`format`]: seeded synthetic environments and their text form.
//! - [`values`]: policy evaluation, the Bellman optimality operator, value
//!   iteration, greedy policies and depth estimates.
//! - [`self_imitation`]: rollouts, replay and advantage-weighted training.
//! - [`oracle`]: brute-force references for small instances.
//! - [`harness`]: direct generation, budgeted search and experiment reports.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env_gen;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod self_imitation;
pub mod values;

pub use error::{Error, Result};
pub use mdp::{ActionId, Path, StateId, TreeMdp};
pub use values::{StochasticPolicy, ValueTable};

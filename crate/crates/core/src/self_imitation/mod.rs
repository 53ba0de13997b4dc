//! Self-imitation training: rollouts, successful-branch extraction, replay,
//! tabular value learning and advantage-weighted policy updates.

mod buffer;
mod learner;
mod train;
mod tree;

pub use buffer::ReplayBuffer;
pub use learner::{exp_clip, policy_update_exact, policy_update_sampled, TabularValueLearner};
pub use train::{metrics_csv, train, IterationMetrics, TrainConfig, TrainOutcome, METRICS_HEADER};
pub use tree::{
    explore, explore_with, extract_successful_branches, is_successful, sample_action, Branch,
    NodeStatus, SynTree, TreeNode,
};

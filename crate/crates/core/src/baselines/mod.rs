//! Comparison planners: earliest-due-date, one-task-per-agent Hungarian
//! matching, Monte-Carlo tree search and tabular Q-learning.

pub mod edd;
pub mod hungarian;

pub use edd::edd_assign;
pub use hungarian::{hungarian_assign, max_weight_matching, AssignmentMatrix};
pub mod mcts;

pub use mcts::{mcts_plan, ConveyorModel, DroneModel, GenerativeModel, MctsConfig};
pub mod qlearning;

pub use qlearning::{qlearn_train, QLearnConfig, QPolicy, QTable};

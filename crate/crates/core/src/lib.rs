//! Stochastic task allocation for multi-agent systems with time-windowed
//! tasks and random completion times.

pub mod baselines;
pub mod coordination;
pub mod error;
pub mod harness;
pub mod instance_file;
pub mod policy_tree;
pub mod problem;
pub mod search;

pub mod conveyor;
pub mod drone;

pub use error::{Error, Result};
pub use problem::{
    AgentId, Allocation, CompletionModel, Conflict, ContingentPlan, JointPolicy, ProblemInstance, TaskId, TaskSpec,
    Time, TimeWindow,
};

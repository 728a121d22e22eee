use thiserror::Error;

use crate::problem::{AgentId, TaskId, Time};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("no time window for ({0}, {1})")]
    MissingWindow(AgentId, TaskId),
    #[error("no completion model for ({0}, {1})")]
    MissingModel(AgentId, TaskId),
    #[error("invalid time window [{lower}, {upper})")]
    InvalidWindow { lower: Time, upper: Time },
    #[error("invalid completion model: {0}")]
    InvalidModel(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("{agent} cannot attempt {task} at t={t}")]
    InfeasibleAttempt { agent: AgentId, task: TaskId, t: Time },
    #[error("enumeration budget exceeded")]
    BudgetExceeded,
    #[error("malformed policy tree: {0}")]
    Structure(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("coordination graph has a cycle")]
    CyclicGraph,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// A fault raised by a task body or by dynamic use-declaration enforcement.
/// A fault suspends the pool; it is reported, not silently swallowed.
#[derive(Debug, Clone, Error)]
#[error("task {task_label} ({instr}): {msg}")]
pub struct TaskFault {
    pub task_label: String,
    pub instr: String,
    pub msg: String,
}

#[derive(Debug, Error)]
pub enum RunError {
    /// Pool is non-empty but nothing can make progress. Carries a readable
    /// report: the shortest dependence cycle, or the origin-less items.
    #[error("deadlock: {report}")]
    Deadlock { report: String },

    #[error("task failure: {0}")]
    Fault(#[from] TaskFault),

    #[error("await on item that ended {state}")]
    AwaitUnresolved { state: String },

    #[error("stream budget exhausted ({budget} elements)")]
    BudgetExhausted { budget: usize },

    #[error("snapshot refused: {reason}")]
    SnapshotRefused { reason: String },

    #[error("snapshot/journal i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot decode: {0}")]
    Decode(String),

    #[error("{0}")]
    Config(String),
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

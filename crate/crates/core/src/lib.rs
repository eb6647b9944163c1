//! Task-pool runtime.
//!
//! Applications are expressed as tasks over single-assignment items. A task
//! executes autonomously: it reads evaluated ins, writes or aliases outs, and
//! may replace itself in the pool by spawning child tasks that take over
//! responsibility for its items. Execution finishes exactly when the pool is
//! empty. Scheduling order, demand propagation, speculation limits, promise
//! priorities, memoization and journaling are all pluggable per run.

pub mod arrays;
pub mod error;
pub mod instr;
pub mod item;
pub mod journal;
pub mod label;
pub mod lcg;
pub mod memo;
pub mod nonlocal;
pub mod pool;
pub mod sched;
pub mod snapshot;
pub mod task;
pub mod usedecl;
pub mod value;

pub use arrays::{ArrayDecl, ArrayId, OriginRange, Rule, RuleArg};
pub use error::{Result, RunError, TaskFault};
pub use instr::{CellId, ChainId, CurryArg, InstrBody, NonlocalRef, Param, ParamTy, Prototype};
pub use item::{Item, ItemId, ItemState, TaskId};
pub use journal::{Event, EventKind, Journal, RunStats};
pub use label::{LabelArena, SeqLabel, ROOT_LABEL};
pub use lcg::Lcg;
pub use nonlocal::{Access, CellKind, SlotKey};
pub use pool::{BodyErr, BodyResult, Pool, RunOutcome, TaskCtx, UNDEMANDED};
pub use sched::{Drive, Order, Policy, PromiseMode, Scheduler};
pub use task::{ArgBind, BindSpec, OutStatus, Task, TaskState};
pub use usedecl::{PromiseSpec, Role, UseDecl};
pub use value::{InstrId, Value};

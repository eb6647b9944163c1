use crate::arrays::ArrayId;
use crate::instr::CellId;
use crate::item::{ItemId, TaskId};
use crate::label::SeqLabel;
use crate::value::{InstrId, Value};

/// How an argument is bound at a spawn site. In-bindings carry data toward
/// the task, out-bindings name the items the task must resolve or
/// explicitly ignore.
#[derive(Debug, Clone)]
pub enum ArgBind {
    InItem(ItemId),
    InValue(Value),
    InElem(ArrayId, i64),
    /// Nonlocal cell passed as an argument; resolved to the spawner's slot
    /// at spawn time.
    CellIn(CellId),
    CellOut(CellId),
    /// Resolved forms carry the slot the touch lands on.
    SlotIn(CellId, crate::nonlocal::SlotKey),
    SlotOut(CellId, crate::nonlocal::SlotKey),
    /// View of `array` starting at `base`, presented to the child as
    /// indices `lo..lo+len` (len None = open).
    InSlice {
        array: ArrayId,
        base: i64,
        lo: i64,
        len: Option<i64>,
    },
    /// Stream view: window elements from `from` are strict, the tail is
    /// lazy.
    InStream { array: ArrayId, from: i64 },
    InOut { input: ItemId, output: ItemId },
    Out(ItemId),
    OutElem(ArrayId, i64),
    OutSlice {
        array: ArrayId,
        base: i64,
        lo: i64,
        len: Option<i64>,
    },
    OutStream { array: ArrayId, from: i64 },
}

/// Spawn-site modifiers attached to a binding: default candidacy and
/// declared indeterminacy apply to the bound out item.
#[derive(Debug, Clone)]
pub struct BindSpec {
    pub bind: ArgBind,
    pub default_candidate: bool,
    pub indet: bool,
}

impl BindSpec {
    pub fn new(bind: ArgBind) -> BindSpec {
        BindSpec {
            bind,
            default_candidate: false,
            indet: false,
        }
    }
    pub fn default_candidate(mut self) -> BindSpec {
        self.default_candidate = true;
        self
    }
    pub fn indet(mut self) -> BindSpec {
        self.indet = true;
        self
    }
}

impl From<ArgBind> for BindSpec {
    fn from(b: ArgBind) -> BindSpec {
        BindSpec::new(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskState {
    Pending,
    Running,
    Done,
    Cancelled,
}

/// Fate of a scalar out parameter over the task's run. A task must leave
/// every scalar out either resolved, delegated to a child, or covered by an
/// ignore right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutStatus {
    Pending,
    Wrote,
    Aliased,
    Delegated,
    Ignored,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: TaskId,
    pub instr: InstrId,
    /// Unresolved instruction-slot target; looked up at execution time.
    pub slot: Option<CellId>,
    pub label: SeqLabel,
    pub spawn_seq: u64,
    pub state: TaskState,
    pub args: Vec<BindSpec>,
    /// Per-scalar-out bookkeeping, indexed like args.
    pub out_status: Vec<OutStatus>,
    /// Number of strict inputs still unresolved.
    pub strict_pending: u32,
    /// Slots whose fences gate this task (program-order admission), with
    /// the declared access.
    pub fence_cells: Vec<(CellId, crate::nonlocal::SlotKey, crate::nonlocal::Access)>,
    /// Resolution context for down cells: which slot each reachable down
    /// cell maps to for this task's spawns.
    pub down_ctx: Vec<(CellId, crate::nonlocal::SlotKey)>,
    /// Next child ordinal for label allocation.
    pub next_ordinal: u32,
    pub demanded: bool,
    /// Conditional-gate count between this task and its nearest demanded
    /// ancestor; admission under demand drive requires depth <= limit.
    pub spec_depth: u32,
    /// Scheduler promise (larger runs earlier under promise policies).
    pub promise: Option<f64>,
    pub enqueued: bool,
    /// Worker whose deque holds the task under work stealing.
    pub home_worker: u32,
    /// Self-recursive inline budget already consumed.
    pub inline_runs: u32,
    /// Down cells this task opened private copies for at execution.
    pub scope_cells: Vec<CellId>,
    /// Items whose values the body actually consumed; conditional ins
    /// count toward relevance only when they appear here.
    pub reads: Vec<ItemId>,
}

use crate::value::Value;

pub type ItemId = u32;
pub type TaskId = u32;

/// Resolution state of an item. Items are single-assignment: once
/// Evaluated or Aliased they never change, which is what makes task
/// results independent of execution order.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemState {
    Unresolved,
    Evaluated(Value),
    /// Resolves to whatever the target resolves to.
    Aliased(ItemId),
    /// The value was dropped after its last expected consumer finished; a
    /// deductive rule can re-derive it on demand.
    Released,
    /// All candidate origins were cancelled; reading is a fault.
    Cancelled,
}

/// One candidate origin of an item. Multiple entries form a multi-origin
/// group: the first candidate to write or alias wins, default candidates
/// are held back until every non-default entry is gone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginEntry {
    pub task: TaskId,
    pub default_candidate: bool,
}

#[derive(Debug, Clone)]
pub struct Item {
    pub state: ItemState,
    pub origins: Vec<OriginEntry>,
    /// Set when any origin site declared the outcome indeterminate; the
    /// agreement check in verify mode skips such items.
    pub indet: bool,
    /// Ever had more than one candidate origin; late writes from losing
    /// candidates are discarded rather than faulted.
    pub multi_origin: bool,
    /// The task that resolved this item, for relevance audits.
    pub resolved_by: Option<TaskId>,
    /// Conditional-gate distance from the nearest demanded consumer;
    /// u32::MAX means nothing demands the item.
    pub demand_depth: u32,
    /// Tasks whose strict inputs include this item, to be woken on
    /// resolution.
    pub waiters: Vec<TaskId>,
    /// Live consumers registered at spawn time; when this drops to zero a
    /// rule-produced element may be released.
    pub pending_consumers: u32,
    /// Element items remember their array and index so releases and
    /// re-derivations can find the rule.
    pub elem_of: Option<(crate::arrays::ArrayId, i64)>,
    /// Pinned by an await or an app-level output alias; never released.
    pub pinned: bool,
    /// Produced by a deductive-rule instantiation, hence re-derivable and
    /// eligible for release once consumers finish.
    pub rule_produced: bool,
    pub name: Option<Box<str>>,
}

impl Item {
    pub fn fresh() -> Item {
        Item {
            state: ItemState::Unresolved,
            origins: Vec::new(),
            indet: false,
            multi_origin: false,
            resolved_by: None,
            demand_depth: u32::MAX,
            waiters: Vec::new(),
            pending_consumers: 0,
            elem_of: None,
            pinned: false,
            rule_produced: false,
            name: None,
        }
    }

    pub fn evaluated(v: Value) -> Item {
        let mut it = Item::fresh();
        it.state = ItemState::Evaluated(v);
        it
    }

    pub fn is_resolved(&self) -> bool {
        !matches!(self.state, ItemState::Unresolved | ItemState::Released)
    }

    pub fn has_live_non_default_origin(&self) -> bool {
        self.origins.iter().any(|o| !o.default_candidate)
    }
}

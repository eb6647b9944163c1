use crate::item::TaskId;
use crate::value::Value;
use std::collections::VecDeque;

/// How a declared nonlocal reference touches its cell. Reads commute with
/// each other under the fence; any write serializes against every other
/// touch in program order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// One shared slot; changes propagate to all later tasks.
    Updown,
    /// Scoped copies; changes propagate only within the modifying scope.
    Down,
    /// Updown slot private to the declaring instruction.
    Static,
    /// Interaction channel: an append-only output log and a consumable
    /// input queue. Every touch is ordering-significant.
    Channel,
    /// Rebindable instruction slot; holds a Routine value.
    InstrSlot,
}

/// Where a down-cell touch lands: the declaring (root) slot or the private
/// copy owned by a scope-creating task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotKey {
    Root,
    Scope(TaskId),
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub key: SlotKey,
    pub value: Option<Value>,
    /// Live tasks registered to touch this slot, with their access.
    pub touchers: Vec<(TaskId, Access)>,
}

#[derive(Debug)]
pub struct Cell {
    pub name: String,
    pub kind: CellKind,
    pub slots: Vec<Slot>,
    /// Channel state, used only when kind == Channel.
    pub out_log: Vec<Value>,
    pub input: VecDeque<Value>,
    /// For instruction slots: the parameter surface tasks spawned through
    /// the slot are bound against, fixed at declaration so spawners and
    /// binders agree.
    pub slot_proto: Option<crate::instr::Prototype>,
}

impl Cell {
    pub fn new(name: impl Into<String>, kind: CellKind, init: Option<Value>) -> Cell {
        Cell {
            name: name.into(),
            kind,
            slots: vec![Slot {
                key: SlotKey::Root,
                value: init,
                touchers: Vec::new(),
            }],
            out_log: Vec::new(),
            input: VecDeque::new(),
            slot_proto: None,
        }
    }

    pub fn slot_index(&self, key: SlotKey) -> Option<usize> {
        self.slots.iter().position(|s| s.key == key)
    }

    pub fn slot_mut(&mut self, key: SlotKey) -> &mut Slot {
        let i = self
            .slot_index(key)
            .expect("slot must be created before touch");
        &mut self.slots[i]
    }

    /// Opens a scope copy for `task`, seeded from `parent` slot's current
    /// value. Idempotent per task; a slot pre-created empty by fence
    /// registration is seeded on first open.
    pub fn open_scope(&mut self, task: TaskId, parent: SlotKey) -> SlotKey {
        let key = SlotKey::Scope(task);
        let seed = self
            .slot_index(parent)
            .and_then(|i| self.slots[i].value.clone());
        match self.slot_index(key) {
            None => self.slots.push(Slot {
                key,
                value: seed,
                touchers: Vec::new(),
            }),
            Some(i) => {
                if self.slots[i].value.is_none() {
                    self.slots[i].value = seed;
                }
            }
        }
        key
    }
}

/// A fence admits a task on a slot once no earlier-labeled live toucher
/// conflicts with it. Earlier/later is program order (task label order).
pub fn fence_conflict(a: Access, b: Access) -> bool {
    matches!((a, b), (Access::Write, _) | (_, Access::Write))
}

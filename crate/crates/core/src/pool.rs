use crate::arrays::{ArrayDecl, ArrayId, OriginRange, Rule, RuleArg};
use crate::error::{RunError, TaskFault};
use crate::instr::{
    CellId, ChainId, CurryArg, InstrBody, Instruction, NonlocalRef, ParamTy, Prototype,
};
use crate::item::{Item, ItemState, OriginEntry, TaskId};
use crate::journal::{Event, EventKind, Journal, RunStats};
use crate::label::{LabelArena, SeqLabel, ROOT_LABEL};
use crate::memo::{memo_key, MemoCache, Outcome, TplArg, TplSpawn};
use crate::nonlocal::{fence_conflict, Access, Cell, CellKind, SlotKey};
use crate::sched::{Drive, Policy, PromiseMode, SchedEntry, Scheduler};
use crate::task::{ArgBind, BindSpec, OutStatus, Task, TaskState};
use crate::usedecl::Role;
use crate::value::{InstrId, Value};
use std::collections::HashMap;
use std::sync::Arc;

pub use crate::item::ItemId;

pub const UNDEMANDED: u32 = u32::MAX;

/// Why a body could not finish this attempt. Blocking is only legal before
/// the body has performed any effect, so a re-run observes a fresh start.
#[derive(Debug, Clone)]
pub enum BodyErr {
    Fault(String),
    Blocked(Vec<ItemId>),
}

impl From<String> for BodyErr {
    fn from(s: String) -> BodyErr {
        BodyErr::Fault(s)
    }
}
impl From<&str> for BodyErr {
    fn from(s: &str) -> BodyErr {
        BodyErr::Fault(s.to_string())
    }
}

pub type BodyResult = Result<(), BodyErr>;

#[derive(Debug, Clone)]
enum SpawnTarget {
    Instr(InstrId),
    Slot(CellId),
}

#[derive(Debug, Clone)]
struct SpawnRec {
    target: SpawnTarget,
    args: Vec<BindSpec>,
    promise: Option<f64>,
}

/// Cached declaration closure of one instruction: every cell it or its
/// callees may touch, and the purity verdict that follows.
#[derive(Debug, Clone, Default)]
pub(crate) struct Closure {
    pub(crate) touches: Vec<(CellId, Access)>,
    pub(crate) down_cells: Vec<CellId>,
    pub(crate) pure: bool,
    pub(crate) memoizable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Finished,
    Paused,
}

pub struct Pool {
    pub arena: LabelArena,
    pub items: Vec<Item>,
    pub tasks: Vec<Task>,
    pub arrays: Vec<ArrayDecl>,
    pub cells: Vec<Cell>,
    pub chains: Vec<ItemId>,
    pub(crate) registry: Vec<Instruction>,
    pub(crate) closures: Vec<Option<Closure>>,
    pub(crate) names: HashMap<String, InstrId>,
    pub sched: Scheduler,
    pub memo: Option<MemoCache>,
    pub journal: Journal,
    pub record_journal: bool,
    pub stats: RunStats,
    pub(crate) spawn_counter: u64,
    pub(crate) live_tasks: u64,
    pub(crate) root_ordinal: u32,
    pub verify_indet: bool,
    pub failed: Option<TaskFault>,
    budget_hit: Option<usize>,
    script_cursor: usize,
    /// Distinct element reads per array over the whole run, and the widest
    /// per-task element read set; cheap instrumentation for laziness
    /// bounds.
    pub elem_reads: HashMap<ArrayId, std::collections::HashSet<i64>>,
    pub max_elem_reads_per_task: u64,
    pub(crate) derived_count: u32,
}

impl Pool {
    pub fn new(policy: Policy) -> Pool {
        Pool {
            arena: LabelArena::new(),
            items: Vec::new(),
            tasks: Vec::new(),
            arrays: Vec::new(),
            cells: Vec::new(),
            chains: Vec::new(),
            registry: Vec::new(),
            closures: Vec::new(),
            names: HashMap::new(),
            sched: Scheduler::new(policy),
            memo: None,
            journal: Journal::default(),
            record_journal: true,
            stats: RunStats::default(),
            spawn_counter: 0,
            live_tasks: 0,
            root_ordinal: 0,
            verify_indet: false,
            failed: None,
            budget_hit: None,
            script_cursor: 0,
            elem_reads: HashMap::new(),
            max_elem_reads_per_task: 0,
            derived_count: 0,
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.sched.policy
    }

    pub fn enable_memo(&mut self, on: bool) {
        self.memo = if on { Some(MemoCache::default()) } else { None };
    }

    pub fn set_yield(&mut self, on: bool) {
        self.sched.yield_flag = on;
    }

    // ---- registration ----------------------------------------------------

    pub fn register(&mut self, proto: Prototype, body: InstrBody) -> InstrId {
        let id = self.registry.len() as InstrId;
        let name = proto.name.clone();
        self.registry.push(Instruction {
            proto,
            body,
            pure: true,
            memoizable: true,
            may_touch: Vec::new(),
            down_pins: Vec::new(),
        });
        self.closures.push(None);
        self.names.insert(name, id);
        id
    }

    pub fn register_host(
        &mut self,
        proto: Prototype,
        f: impl Fn(&mut TaskCtx<'_>) -> BodyResult + 'static,
    ) -> InstrId {
        self.register(proto, InstrBody::Host(Arc::new(f)))
    }

    /// Visible prototype of a curry over `target`: the forwarded positions,
    /// in caller-parameter order.
    pub(crate) fn curry_proto(
        &self,
        name: String,
        target: InstrId,
        args: &[CurryArg],
    ) -> Prototype {
        let mut proto = Prototype::new(name);
        let tparams = &self.registry[target as usize].proto.params;
        let mut fwd: Vec<(usize, usize)> = Vec::new();
        for (ti, ca) in args.iter().enumerate() {
            if let CurryArg::Param(p) = ca {
                fwd.push((*p, ti));
            }
        }
        fwd.sort_by_key(|&(p, _)| p);
        for &(_, ti) in &fwd {
            proto = proto.param(tparams[ti].clone());
        }
        proto
    }

    pub fn instr_id(&self, name: &str) -> Option<InstrId> {
        self.names.get(name).copied()
    }

    pub fn instr_name(&self, id: InstrId) -> &str {
        &self.registry[id as usize].proto.name
    }

    pub fn instruction(&self, id: InstrId) -> &Instruction {
        &self.registry[id as usize]
    }

    /// Declaration closure: cells touched by the instruction or any callee,
    /// valid for fences and purity. Call-by-name cycles are handled by a
    /// visited set; unknown callee names are a registration fault surfaced
    /// at first spawn.
    pub(crate) fn closure(&mut self, id: InstrId) -> Result<Closure, String> {
        if let Some(c) = &self.closures[id as usize] {
            return Ok(c.clone());
        }
        let mut visited = Vec::new();
        let c = self.closure_rec(id, &mut visited)?;
        self.closures[id as usize] = Some(c.clone());
        Ok(c)
    }

    fn closure_rec(&mut self, id: InstrId, visited: &mut Vec<InstrId>) -> Result<Closure, String> {
        if let Some(c) = &self.closures[id as usize] {
            return Ok(c.clone());
        }
        if visited.contains(&id) {
            // Recursive knot: contributes nothing beyond what the cycle
            // members already declare.
            return Ok(Closure {
                pure: true,
                memoizable: true,
                ..Closure::default()
            });
        }
        visited.push(id);
        let (nonlocals, calls, dynamic, is_curry, has_chain, pins) = {
            let ins = &self.registry[id as usize];
            let (is_curry, has_chain, curry_target) = match &ins.body {
                InstrBody::Curry { target, args } => (
                    true,
                    args.iter()
                        .any(|a| matches!(a, CurryArg::Chain(_) | CurryArg::ChainNext(_))),
                    Some(*target),
                ),
                _ => (false, false, None),
            };
            let mut calls: Vec<String> = ins.proto.calls.clone();
            if let Some(t) = curry_target {
                calls.push(self.registry[t as usize].proto.name.clone());
            }
            (
                ins.proto.nonlocals.clone(),
                calls,
                ins.proto.dynamic_calls,
                is_curry,
                has_chain,
                ins.down_pins.clone(),
            )
        };
        let mut cl = Closure {
            pure: true,
            memoizable: true,
            ..Closure::default()
        };
        let _ = is_curry;
        if has_chain {
            cl.memoizable = false;
        }
        if dynamic {
            // Unknown callees: assume impure-through-children is NOT
            // possible only for cells, so stay conservative on memo and
            // keep purity from declared parts; dynamic spawns re-check at
            // spawn time.
            cl.memoizable = false;
        }
        for n in &nonlocals {
            match n {
                NonlocalRef::Cell(c, acc) => {
                    let kind = self.cells[*c as usize].kind;
                    let access = if kind == CellKind::Channel {
                        Access::Write
                    } else {
                        *acc
                    };
                    push_touch(&mut cl.touches, *c, access);
                    if kind == CellKind::Down {
                        if !cl.down_cells.contains(c) {
                            cl.down_cells.push(*c);
                        }
                    }
                    cl.pure = false;
                    cl.memoizable = false;
                }
                NonlocalRef::ParamChannel(_) => {
                    cl.pure = false;
                    cl.memoizable = false;
                }
            }
        }
        // Pinned cells are reachable by construction.
        for (c, _) in &pins {
            if !cl.down_cells.contains(c) {
                cl.down_cells.push(*c);
            }
            cl.pure = false;
            cl.memoizable = false;
        }
        for callee in &calls {
            let Some(cid) = self.names.get(callee).copied() else {
                return Err(format!("unknown callee in declaration: {callee}"));
            };
            let sub = self.closure_rec(cid, visited)?;
            for (c, a) in sub.touches {
                push_touch(&mut cl.touches, c, a);
            }
            for c in sub.down_cells {
                if !cl.down_cells.contains(&c) {
                    cl.down_cells.push(c);
                }
            }
            cl.pure &= sub.pure;
            cl.memoizable &= sub.memoizable;
        }
        visited.pop();
        Ok(cl)
    }

    pub fn is_pure(&mut self, id: InstrId) -> bool {
        self.closure(id).map(|c| c.pure).unwrap_or(false)
    }

    // ---- cells, arrays, chains, items -------------------------------------

    pub fn declare_cell(
        &mut self,
        name: impl Into<String>,
        kind: CellKind,
        init: Option<Value>,
    ) -> CellId {
        let id = self.cells.len() as CellId;
        self.cells.push(Cell::new(name, kind, init));
        id
    }

    pub fn declare_slot(
        &mut self,
        name: impl Into<String>,
        proto: Prototype,
        init: Option<InstrId>,
    ) -> CellId {
        let id = self.declare_cell(name, CellKind::InstrSlot, init.map(Value::Routine));
        self.cells[id as usize].slot_proto = Some(proto);
        id
    }

    pub fn feed_channel(&mut self, cell: CellId, vals: impl IntoIterator<Item = Value>) {
        self.cells[cell as usize].input.extend(vals);
    }

    pub fn channel_log(&self, cell: CellId) -> &[Value] {
        &self.cells[cell as usize].out_log
    }

    pub fn cell_value(&self, cell: CellId) -> Option<Value> {
        let c = &self.cells[cell as usize];
        c.slots[0].value.clone()
    }

    pub fn new_item_raw(&mut self, name: Option<&str>) -> ItemId {
        let id = self.items.len() as ItemId;
        let mut it = Item::fresh();
        it.name = name.map(|s| s.into());
        self.items.push(it);
        id
    }

    pub fn evaluated_item(&mut self, v: Value) -> ItemId {
        let id = self.items.len() as ItemId;
        self.items.push(Item::evaluated(v));
        id
    }

    pub fn pin(&mut self, item: ItemId) {
        self.items[item as usize].pinned = true;
        self.demand_from(vec![DemandSeed::Item(item, 0)]);
    }

    pub fn new_array_raw(&mut self, name: &str, lo: i64, hi: Option<i64>) -> ArrayId {
        let id = self.arrays.len() as ArrayId;
        let mut a = ArrayDecl::new(name, lo, hi);
        // Anchor label under which rule instances are labelled.
        let anchor_ord = self.next_root_ordinal();
        a.anchor = Some(self.arena.child(ROOT_LABEL, anchor_ord));
        self.arrays.push(a);
        id
    }

    pub fn set_array_budget(&mut self, arr: ArrayId, budget: u64) {
        self.arrays[arr as usize].budget = budget;
    }

    pub fn attach_rule(&mut self, arr: ArrayId, rule: Rule) {
        self.arrays[arr as usize].rules.push(rule);
    }

    fn next_root_ordinal(&mut self) -> u32 {
        self.root_ordinal += 1;
        self.root_ordinal
    }

    pub fn ensure_elem(&mut self, arr: ArrayId, idx: i64) -> Result<ItemId, String> {
        if !self.arrays[arr as usize].in_bounds(idx) {
            return Err(format!(
                "index {idx} out of bounds for array {}",
                self.arrays[arr as usize].name
            ));
        }
        if let Some(&it) = self.arrays[arr as usize].elems.get(&idx) {
            return Ok(it);
        }
        let a = &self.arrays[arr as usize];
        if a.materialized >= a.budget {
            let b = a.budget as usize;
            let msg = format!("array {} exceeded its element budget {}", a.name, a.budget);
            self.budget_hit = Some(b);
            return Err(msg);
        }
        let it = self.new_item_raw(None);
        let arr_ref = &mut self.arrays[arr as usize];
        arr_ref.elems.insert(idx, it);
        arr_ref.materialized += 1;
        self.items[it as usize].elem_of = Some((arr, idx));
        Ok(it)
    }

    pub fn write_elem_raw(&mut self, arr: ArrayId, idx: i64, v: Value) {
        let it = self.ensure_elem(arr, idx).expect("in-bounds base element");
        self.resolve_write(it, v, None).expect("base element fresh");
    }

    pub fn new_chain(&mut self, init: ItemId) -> ChainId {
        let id = self.chains.len() as ChainId;
        self.chains.push(init);
        id
    }

    pub fn chain_head(&self, ch: ChainId) -> ItemId {
        self.chains[ch as usize]
    }

    // ---- value access ------------------------------------------------------

    /// Follow alias chains to the terminal item.
    pub fn resolve(&self, mut id: ItemId) -> ItemId {
        let mut hops = 0;
        while let ItemState::Aliased(t) = self.items[id as usize].state {
            id = t;
            hops += 1;
            debug_assert!(hops <= self.items.len(), "alias cycle");
        }
        id
    }

    pub fn value(&self, id: ItemId) -> Option<Value> {
        let t = self.resolve(id);
        match &self.items[t as usize].state {
            ItemState::Evaluated(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn elem_value(&self, arr: ArrayId, idx: i64) -> Option<Value> {
        self.arrays[arr as usize]
            .elems
            .get(&idx)
            .and_then(|&it| self.value(it))
    }

    pub fn array_values(&self, arr: ArrayId) -> Vec<(i64, Option<Value>)> {
        self.arrays[arr as usize]
            .elems
            .iter()
            .map(|(&i, &it)| (i, self.value(it)))
            .collect()
    }

    // ---- journal -----------------------------------------------------------

    fn display_label(&self, l: SeqLabel) -> String {
        let d = self.arena.depth(l);
        if d <= 12 {
            return self.arena.display(l);
        }
        // Deep chains would make journal lines quadratic; keep the head,
        // the tail, and the depth, which stays unique enough for replay
        // anchoring and is deterministic.
        let path = self.arena.path(l);
        let head: Vec<String> = path[..2].iter().map(|o| o.to_string()).collect();
        let tail: Vec<String> = path[path.len() - 4..].iter().map(|o| o.to_string()).collect();
        format!("{}…{}#d{}", head.join("."), tail.join("."), d)
    }

    fn jrnl(&mut self, kind: EventKind, label: SeqLabel, instr: &str, args: String) {
        if !self.record_journal {
            return;
        }
        let ev = Event {
            step: self.stats.steps,
            kind,
            label: self.display_label(label),
            instr: instr.to_string(),
            args,
        };
        self.journal.push(ev);
    }

    // ---- spawning ----------------------------------------------------------

    pub fn spawn_root(&mut self, instr: InstrId, args: Vec<BindSpec>) -> Result<TaskId, RunError> {
        let ord = self.next_root_ordinal();
        let label = self.arena.child(ROOT_LABEL, ord);
        self.spawn_internal(SpawnTarget::Instr(instr), args, None, label, None, false)
            .map_err(|e| self.fault_err(ROOT_LABEL, "root", e))
    }

    fn fault_err(&mut self, label: SeqLabel, instr: &str, msg: String) -> RunError {
        let f = TaskFault {
            task_label: self.display_label(label),
            instr: instr.to_string(),
            msg,
        };
        RunError::Fault(f)
    }

    /// Create a task from a spawn record. Performs curry expansion, origin
    /// registration, delegation transfer, fences, demand seeding, strict
    /// counting, and scheduling.
    fn spawn_internal(
        &mut self,
        target: SpawnTarget,
        mut args: Vec<BindSpec>,
        parent: Option<TaskId>,
        label: SeqLabel,
        promise: Option<f64>,
        rule_produced: bool,
    ) -> Result<TaskId, String> {
        // Instruction-slot spawns defer lookup; curries expand here.
        let (instr, slot) = match target {
            SpawnTarget::Instr(i) => (i, None),
            SpawnTarget::Slot(c) => {
                if self.cells[c as usize].kind != CellKind::InstrSlot {
                    return Err("spawn through a non-instruction cell".into());
                }
                // Arity check against whatever is bound now is deferred to
                // execution; the fence guarantees binders run first.
                (u32::MAX, Some(c))
            }
        };
        let mut instr = instr;
        if slot.is_none() {
            // Expand curry chains: rewrite to the target with mapped args.
            while let InstrBody::Curry {
                target: t,
                args: cargs,
            } = self.registry[instr as usize].body.clone()
            {
                let mut new_args = Vec::with_capacity(cargs.len());
                for ca in &cargs {
                    let spec = match ca {
                        CurryArg::Param(p) => {
                            args.get(*p)
                                .cloned()
                                .ok_or_else(|| "curry forwards a missing argument".to_string())?
                        }
                        CurryArg::Lit(v) => BindSpec::new(ArgBind::InValue(v.clone())),
                        CurryArg::Item(it) => BindSpec::new(ArgBind::InItem(*it)),
                        CurryArg::Chain(ch) => {
                            BindSpec::new(ArgBind::InItem(self.chains[*ch as usize]))
                        }
                        CurryArg::ChainNext(ch) => {
                            let fresh = self.new_item_raw(None);
                            self.chains[*ch as usize] = fresh;
                            BindSpec::new(ArgBind::Out(fresh))
                        }
                    };
                    new_args.push(spec);
                }
                args = new_args;
                instr = t;
            }
            let proto_len = self.registry[instr as usize].proto.params.len();
            if args.len() != proto_len {
                return Err(format!(
                    "{} expects {} arguments, got {}",
                    self.registry[instr as usize].proto.name,
                    proto_len,
                    args.len()
                ));
            }
        }

        let id = self.tasks.len() as TaskId;
        self.spawn_counter += 1;
        let spawn_seq = self.spawn_counter;

        // Down-cell context inherited from the parent, overridden by the
        // parent's own scopes.
        let down_ctx = match parent {
            Some(p) => {
                let pt = &self.tasks[p as usize];
                let mut ctx = pt.down_ctx.clone();
                let scopes = pt.scope_cells.clone();
                for c in scopes {
                    set_ctx(&mut ctx, c, SlotKey::Scope(p));
                }
                ctx
            }
            None => Vec::new(),
        };

        // Resolve cell arguments against the spawner's context and collect
        // fence registrations.
        let mut fences: Vec<(CellId, SlotKey, Access)> = Vec::new();
        for spec in args.iter_mut() {
            let resolved = match spec.bind {
                ArgBind::CellIn(c) => {
                    let key = self.arg_slot(c, &down_ctx);
                    Some((ArgBind::SlotIn(c, key), Access::Read))
                }
                ArgBind::CellOut(c) => {
                    let key = self.arg_slot(c, &down_ctx);
                    Some((ArgBind::SlotOut(c, key), Access::Write))
                }
                _ => None,
            };
            if let Some((bind, acc)) = resolved {
                if let ArgBind::SlotIn(c, k) | ArgBind::SlotOut(c, k) = bind {
                    fences.push((c, k, acc));
                }
                spec.bind = bind;
            }
        }

        // Declared nonlocal touches.
        if slot.is_none() {
            let cl = self.closure(instr)?;
            let pins: Vec<CellId> = self.registry[instr as usize]
                .down_pins
                .iter()
                .map(|(c, _)| *c)
                .collect();
            for (c, a) in cl.touches {
                let kind = self.cells[c as usize].kind;
                let (key, acc) = match kind {
                    CellKind::Down => {
                        if pins.contains(&c) {
                            continue; // pinned: no touch of the enclosing slot
                        }
                        (ctx_slot(&down_ctx, c), Access::Read)
                    }
                    _ => (SlotKey::Root, a),
                };
                fences.push((c, key, acc));
            }
            // Channel handles through parameters.
            let chans: Vec<usize> = self.registry[instr as usize]
                .proto
                .nonlocals
                .iter()
                .filter_map(|n| match n {
                    NonlocalRef::ParamChannel(p) => Some(*p),
                    _ => None,
                })
                .collect();
            for p in chans {
                let cellid = args.get(p).and_then(|s| match s.bind {
                    ArgBind::InItem(it) => self.value(it).and_then(|v| v.as_int()),
                    ArgBind::InValue(ref v) => v.as_int(),
                    _ => None,
                });
                match cellid {
                    Some(h) if (h as usize) < self.cells.len() => {
                        fences.push((h as CellId, SlotKey::Root, Access::Write));
                    }
                    _ => {
                        // Unresolved handle: conservatively order against
                        // every channel.
                        for c in 0..self.cells.len() as CellId {
                            if self.cells[c as usize].kind == CellKind::Channel {
                                fences.push((c, SlotKey::Root, Access::Write));
                            }
                        }
                    }
                }
            }
        } else if let Some(c) = slot {
            fences.push((c, SlotKey::Root, Access::Read));
        }
        fences.sort_by_key(|&(c, k, _)| (c, k));
        fences.dedup_by_key(|&mut (c, k, _)| (c, k));

        let mut task = Task {
            id,
            instr,
            slot,
            label,
            spawn_seq,
            state: TaskState::Pending,
            args,
            out_status: Vec::new(),
            strict_pending: 0,
            fence_cells: fences.clone(),
            down_ctx,
            next_ordinal: 0,
            demanded: false,
            spec_depth: UNDEMANDED,
            promise,
            enqueued: false,
            home_worker: parent.map(|p| self.tasks[p as usize].home_worker).unwrap_or(0),
            inline_runs: 0,
            scope_cells: Vec::new(),
            reads: Vec::new(),
        };
        task.out_status = vec![OutStatus::Pending; task.args.len()];

        // Register fence touchers.
        for &(c, k, a) in &fences {
            let cell = &mut self.cells[c as usize];
            if cell.slot_index(k).is_none() {
                // Scope slot not opened yet (owner still pending): register
                // on it anyway; it is created empty and seeded at owner
                // execution.
                cell.slots.push(crate::nonlocal::Slot {
                    key: k,
                    value: None,
                    touchers: Vec::new(),
                });
            }
            cell.slot_mut(k).touchers.push((id, a));
        }

        self.tasks.push(task);
        self.live_tasks += 1;
        self.stats.spawned += 1;
        if self.live_tasks > self.stats.peak_pool {
            self.stats.peak_pool = self.live_tasks;
        }

        self.bind_task(id, parent, rule_produced)?;

        let iname = if slot.is_some() {
            "<slot>".to_string()
        } else {
            self.registry[instr as usize].proto.name.clone()
        };
        self.jrnl(
            EventKind::Spawn,
            label,
            &iname,
            format!("seq={spawn_seq}"),
        );

        // Demand seeding: impure tasks are always demanded; otherwise take
        // the best demand over bound outs.
        let depth = self.initial_depth(id);
        if depth != UNDEMANDED {
            self.demand_from(vec![DemandSeed::Task(id, depth)]);
        }
        self.try_enqueue(id);
        Ok(id)
    }

    fn arg_slot(&self, c: CellId, down_ctx: &[(CellId, SlotKey)]) -> SlotKey {
        match self.cells[c as usize].kind {
            CellKind::Down => ctx_slot(down_ctx, c),
            _ => SlotKey::Root,
        }
    }

    /// Wire bindings: origin entries, delegation transfer from the parent,
    /// strict-input counting with waiter registration, consumer counts,
    /// and rule instantiation for referenced bare elements.
    fn bind_task(
        &mut self,
        id: TaskId,
        parent: Option<TaskId>,
        rule_produced: bool,
    ) -> Result<(), String> {
        let nargs = self.tasks[id as usize].args.len();
        let mut strict_pending = 0u32;
        for a in 0..nargs {
            let spec = self.tasks[id as usize].args[a].clone();
            let (role, decl, ty) = self.param_info(id, a);
            match &spec.bind {
                ArgBind::InValue(v) => {
                    let it = self.evaluated_item(v.clone());
                    self.tasks[id as usize].args[a].bind = ArgBind::InItem(it);
                }
                ArgBind::InItem(it) => {
                    if role == Role::Out {
                        return Err("out parameter bound with an in binding".into());
                    }
                    self.items[*it as usize].pending_consumers += 1;
                    if decl.is_strict_in() && !self.item_ready(*it) {
                        strict_pending += 1;
                        let t = self.resolve(*it);
                        self.items[t as usize].waiters.push(id);
                    }
                }
                ArgBind::InElem(arr, idx) => {
                    let it = self.ensure_elem(*arr, *idx)?;
                    self.items[it as usize].pending_consumers += 1;
                    self.tasks[id as usize].args[a].bind = ArgBind::InItem(it);
                    if decl.is_strict_in() && !self.item_ready(it) {
                        strict_pending += 1;
                        let t = self.resolve(it);
                        self.items[t as usize].waiters.push(id);
                        self.maybe_instantiate_rule(*arr, *idx)?;
                    }
                }
                ArgBind::InSlice {
                    array,
                    base,
                    lo,
                    len,
                } => {
                    if decl.is_strict_in() {
                        let Some(n) = len else {
                            return Err("strict array argument needs a bounded slice".into());
                        };
                        for k in 0..*n {
                            let idx = base + k;
                            let it = self.ensure_elem(*array, idx)?;
                            self.items[it as usize].pending_consumers += 1;
                            if !self.item_ready(it) {
                                strict_pending += 1;
                                let t = self.resolve(it);
                                self.items[t as usize].waiters.push(id);
                                self.maybe_instantiate_rule(*array, idx)?;
                            }
                        }
                    }
                    let _ = lo;
                }
                ArgBind::InStream { array, from } => {
                    let window = match ty {
                        ParamTy::Stream { window } => window as i64,
                        _ => return Err("stream binding on a non-stream parameter".into()),
                    };
                    for k in 0..window {
                        let idx = from + k;
                        let it = self.ensure_elem(*array, idx)?;
                        self.items[it as usize].pending_consumers += 1;
                        if !self.item_ready(it) {
                            strict_pending += 1;
                            let t = self.resolve(it);
                            self.items[t as usize].waiters.push(id);
                            self.maybe_instantiate_rule(*array, idx)?;
                        }
                    }
                    // Supply prefetch beyond the consumed point.
                    if self.sched.policy.drive == Drive::Supply {
                        self.prefetch(*array, from + window)?;
                    }
                }
                ArgBind::Out(it) => {
                    if role == Role::In {
                        return Err("in parameter bound with an out binding".into());
                    }
                    self.add_origin(id, *it, spec.default_candidate, spec.indet, parent);
                }
                ArgBind::OutElem(arr, idx) => {
                    let it = self.ensure_elem(*arr, *idx)?;
                    if rule_produced {
                        self.items[it as usize].rule_produced = true;
                    }
                    self.tasks[id as usize].args[a].bind = ArgBind::Out(it);
                    self.add_origin(id, it, spec.default_candidate, spec.indet, parent);
                }
                ArgBind::OutSlice {
                    array,
                    base,
                    lo: _,
                    len,
                } => {
                    let Some(n) = len else {
                        return Err("out slice needs a bounded length".into());
                    };
                    self.transfer_range(
                        *array,
                        *base,
                        base + n - 1,
                        id,
                        spec.default_candidate,
                        spec.indet,
                        parent,
                    );
                }
                ArgBind::OutStream { array, from } => {
                    // Open-ended responsibility: the producer materializes
                    // elements as it goes; origin tracking is by rule or
                    // direct write, so nothing to register here.
                    let _ = (array, from);
                }
                ArgBind::InOut { input, output } => {
                    self.items[*input as usize].pending_consumers += 1;
                    if decl.is_strict_in() && !self.item_ready(*input) {
                        strict_pending += 1;
                        let t = self.resolve(*input);
                        self.items[t as usize].waiters.push(id);
                    }
                    self.add_origin(id, *output, spec.default_candidate, spec.indet, parent);
                }
                ArgBind::SlotIn(..) | ArgBind::SlotOut(..) => {}
                ArgBind::CellIn(_) | ArgBind::CellOut(_) => {
                    unreachable!("cell binds resolved during spawn")
                }
            }
        }
        self.tasks[id as usize].strict_pending = strict_pending;
        Ok(())
    }

    fn param_info(&self, id: TaskId, a: usize) -> (Role, crate::usedecl::UseDecl, ParamTy) {
        let t = &self.tasks[id as usize];
        if t.slot.is_some() || t.instr == u32::MAX {
            // Slot target: parameter surface comes from the slot's declared
            // prototype; fall back to permissive defaults.
            if let Some(c) = t.slot {
                if let Some(proto) = &self.cells[c as usize].slot_proto {
                    if let Some(p) = proto.params.get(a) {
                        return (p.role, p.decl, p.ty);
                    }
                }
            }
            return (
                Role::In,
                crate::usedecl::UseDecl::default(),
                ParamTy::Scalar,
            );
        }
        let p = &self.registry[t.instr as usize].proto.params[a];
        (p.role, p.decl, p.ty)
    }

    fn item_ready(&self, it: ItemId) -> bool {
        let t = self.resolve(it);
        matches!(self.items[t as usize].state, ItemState::Evaluated(_))
    }

    fn add_origin(
        &mut self,
        id: TaskId,
        it: ItemId,
        default_candidate: bool,
        indet: bool,
        parent: Option<TaskId>,
    ) {
        // Delegation: replace the parent's candidacy for this item.
        if let Some(p) = parent {
            let item = &mut self.items[it as usize];
            if let Some(pos) = item.origins.iter().position(|o| o.task == p) {
                item.origins.remove(pos);
                self.mark_out_status(p, it, OutStatus::Delegated);
            }
        }
        let item = &mut self.items[it as usize];
        item.origins.push(OriginEntry {
            task: id,
            default_candidate,
        });
        if indet {
            item.indet = true;
        }
        if item.origins.len() > 1 {
            item.multi_origin = true;
            let defaults = item.origins.iter().filter(|o| o.default_candidate).count();
            if defaults > 1 {
                // Surface as a spawn-time fault through the run loop.
                self.failed = Some(TaskFault {
                    task_label: self.display_label(self.tasks[id as usize].label),
                    instr: self.task_instr_name(id),
                    msg: "more than one default candidate for an item".into(),
                });
            }
        }
    }

    fn transfer_range(
        &mut self,
        arr: ArrayId,
        lo: i64,
        hi: i64,
        id: TaskId,
        default_candidate: bool,
        indet: bool,
        parent: Option<TaskId>,
    ) {
        if indet {
            // Element-level indeterminacy: mark lazily at write; record on
            // materialized elements now.
            let keys: Vec<i64> = self.arrays[arr as usize]
                .elems
                .range(lo..=hi)
                .map(|(&k, _)| k)
                .collect();
            for k in keys {
                let it = self.arrays[arr as usize].elems[&k];
                self.items[it as usize].indet = true;
            }
            self.arrays[arr as usize].indet_ranges.push((lo, hi));
        }
        if let Some(p) = parent {
            // Clip the parent's ranges over [lo, hi].
            let mut replaced = Vec::new();
            let ranges = std::mem::take(&mut self.arrays[arr as usize].origin_ranges);
            let mut took_from_parent = false;
            for r in ranges {
                if r.task != p || r.hi < lo || r.lo > hi {
                    replaced.push(r);
                    continue;
                }
                took_from_parent = true;
                if r.lo < lo {
                    replaced.push(OriginRange {
                        lo: r.lo,
                        hi: lo - 1,
                        ..r
                    });
                }
                if r.hi > hi {
                    replaced.push(OriginRange {
                        lo: hi + 1,
                        hi: r.hi,
                        ..r
                    });
                }
            }
            self.arrays[arr as usize].origin_ranges = replaced;
            if took_from_parent {
                self.mark_array_delegated(p, arr);
            }
        }
        self.arrays[arr as usize].origin_ranges.push(OriginRange {
            lo,
            hi,
            task: id,
            default_candidate,
        });
    }

    fn mark_array_delegated(&mut self, p: TaskId, arr: ArrayId) {
        let nargs = self.tasks[p as usize].args.len();
        for a in 0..nargs {
            let is_match = matches!(
                self.tasks[p as usize].args[a].bind,
                ArgBind::OutSlice { array, .. } if array == arr
            );
            if is_match && self.tasks[p as usize].out_status[a] == OutStatus::Pending {
                self.tasks[p as usize].out_status[a] = OutStatus::Delegated;
            }
        }
    }

    fn mark_out_status(&mut self, id: TaskId, it: ItemId, st: OutStatus) {
        let nargs = self.tasks[id as usize].args.len();
        for a in 0..nargs {
            let hit = match self.tasks[id as usize].args[a].bind {
                ArgBind::Out(o) => o == it,
                ArgBind::InOut { output, .. } => output == it,
                _ => false,
            };
            if hit && self.tasks[id as usize].out_status[a] == OutStatus::Pending {
                self.tasks[id as usize].out_status[a] = st;
                return;
            }
        }
    }

    fn task_instr_name(&self, id: TaskId) -> String {
        let t = &self.tasks[id as usize];
        if t.slot.is_some() && t.instr == u32::MAX {
            if let Some(c) = t.slot {
                return format!("<{}>", self.cells[c as usize].name);
            }
        }
        self.registry[t.instr as usize].proto.name.clone()
    }

    // ---- demand -----------------------------------------------------------

    fn initial_depth(&mut self, id: TaskId) -> u32 {
        let impure = {
            let t = &self.tasks[id as usize];
            if t.slot.is_some() {
                true // unknown body: conservatively always demanded
            } else {
                !self.closure(t.instr).map(|c| c.pure).unwrap_or(false)
            }
        };
        if impure {
            return 0;
        }
        let mut best = UNDEMANDED;
        let t = &self.tasks[id as usize];
        for spec in &t.args {
            match spec.bind {
                ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => {
                    best = best.min(self.items[self.resolve(it) as usize].demand_depth);
                }
                ArgBind::OutSlice {
                    array, base, len, ..
                } => {
                    if let Some(n) = len {
                        for (_, &eit) in self.arrays[array as usize].elems.range(base..base + n) {
                            best = best.min(self.items[self.resolve(eit) as usize].demand_depth);
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// Worklist demand propagation. Seeds carry explicit depths.
    fn demand_from(&mut self, seeds: Vec<DemandSeed>) {
        let mut work: Vec<DemandSeed> = seeds;
        while let Some(s) = work.pop() {
            match s {
                DemandSeed::Item(it, d) => {
                    let mut cur = it;
                    loop {
                        let item = &mut self.items[cur as usize];
                        if item.demand_depth <= d {
                            break;
                        }
                        item.demand_depth = d;
                        match item.state.clone() {
                            ItemState::Aliased(nxt) => {
                                cur = nxt;
                                continue;
                            }
                            ItemState::Evaluated(_) | ItemState::Cancelled => break,
                            ItemState::Unresolved | ItemState::Released => {
                                let origins: Vec<TaskId> =
                                    item.origins.iter().map(|o| o.task).collect();
                                let elem = item.elem_of;
                                for t in origins {
                                    work.push(DemandSeed::Task(t, d));
                                }
                                if let Some((arr, idx)) = elem {
                                    let covers: Vec<TaskId> = self.arrays[arr as usize]
                                        .origin_ranges
                                        .iter()
                                        .filter(|r| r.lo <= idx && idx <= r.hi)
                                        .map(|r| r.task)
                                        .collect();
                                    for t in covers {
                                        work.push(DemandSeed::Task(t, d));
                                    }
                                    let bare = self.items[cur as usize].origins.is_empty()
                                        && covers_is_empty(&self.arrays[arr as usize], idx);
                                    if bare {
                                        let _ = self.maybe_instantiate_rule(arr, idx);
                                    }
                                }
                                break;
                            }
                        }
                    }
                }
                DemandSeed::Task(tid, d) => {
                    if self.tasks[tid as usize].spec_depth <= d {
                        continue;
                    }
                    self.tasks[tid as usize].spec_depth = d;
                    self.try_enqueue(tid);
                    let t = &self.tasks[tid as usize];
                    if t.slot.is_some() {
                        continue;
                    }
                    let nargs = t.args.len();
                    for a in 0..nargs {
                        let (role, decl, ty) = self.param_info(tid, a);
                        if role == Role::Out || !decl.eva {
                            continue;
                        }
                        let dd = if decl.ign { d.saturating_add(1) } else { d };
                        match self.tasks[tid as usize].args[a].bind.clone() {
                            ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => {
                                work.push(DemandSeed::Item(it, dd));
                            }
                            ArgBind::InSlice {
                                array, base, len, ..
                            } => {
                                if let Some(n) = len {
                                    for k in 0..n {
                                        if let Some(&eit) =
                                            self.arrays[array as usize].elems.get(&(base + k))
                                        {
                                            work.push(DemandSeed::Item(eit, dd));
                                        }
                                    }
                                }
                            }
                            ArgBind::InStream { array, from } => {
                                let w = match ty {
                                    ParamTy::Stream { window } => window as i64,
                                    _ => 1,
                                };
                                for k in 0..w {
                                    if let Some(&eit) =
                                        self.arrays[array as usize].elems.get(&(from + k))
                                    {
                                        work.push(DemandSeed::Item(eit, dd));
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    /// Recompute all demand depths from scratch (after retraction events).
    fn demand_recompute(&mut self) {
        for it in &mut self.items {
            it.demand_depth = UNDEMANDED;
        }
        let live: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|t| t.state == TaskState::Pending || t.state == TaskState::Running)
            .map(|t| t.id)
            .collect();
        for t in &live {
            self.tasks[*t as usize].spec_depth = UNDEMANDED;
        }
        let mut seeds = Vec::new();
        for (i, it) in self.items.iter().enumerate() {
            if it.pinned {
                seeds.push(DemandSeed::Item(i as ItemId, 0));
            }
        }
        for tid in live {
            let impure = {
                let t = &self.tasks[tid as usize];
                t.slot.is_some() || !self.closures[t.instr as usize]
                    .as_ref()
                    .map(|c| c.pure)
                    .unwrap_or(false)
            };
            if impure {
                seeds.push(DemandSeed::Task(tid, 0));
            }
        }
        self.demand_from(seeds);
        // Wake anything newly admitted.
        let pend: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|t| t.state == TaskState::Pending && !t.enqueued)
            .map(|t| t.id)
            .collect();
        for t in pend {
            self.try_enqueue(t);
        }
    }

    // ---- rules / streams ----------------------------------------------------

    fn maybe_instantiate_rule(&mut self, arr: ArrayId, idx: i64) -> Result<bool, String> {
        let it = match self.arrays[arr as usize].elems.get(&idx) {
            Some(&i) => i,
            None => return Ok(false),
        };
        {
            let item = &self.items[it as usize];
            if item.is_resolved() && !matches!(item.state, ItemState::Released) {
                return Ok(false);
            }
            if matches!(item.state, ItemState::Evaluated(_)) {
                return Ok(false);
            }
            if !item.origins.is_empty() {
                return Ok(false);
            }
        }
        if !covers_is_empty(&self.arrays[arr as usize], idx) {
            return Ok(false);
        }
        let Some(ri) = self.arrays[arr as usize].rule_for(idx) else {
            return Ok(false);
        };
        let rule = self.arrays[arr as usize].rules[ri].clone();
        // Clear Released back to Unresolved so the fresh instance can write.
        if matches!(self.items[it as usize].state, ItemState::Released) {
            self.items[it as usize].state = ItemState::Unresolved;
        }
        let mut binds = Vec::new();
        for ra in &rule.ins {
            let b = match ra {
                RuleArg::Elem { offset } => ArgBind::InElem(arr, idx + offset),
                RuleArg::OtherElem { array, offset } => ArgBind::InElem(*array, idx + offset),
                RuleArg::SelfIndex => ArgBind::InValue(Value::Int(idx)),
                RuleArg::Lit(v) => ArgBind::InValue(v.clone()),
            };
            binds.push(BindSpec::new(b));
        }
        binds.push(BindSpec::new(ArgBind::OutElem(arr, idx)));
        let anchor = self.arrays[arr as usize].anchor.expect("array anchor");
        let ord = {
            let a = &mut self.arrays[arr as usize];
            a.anchor_ordinal += 1;
            a.anchor_ordinal
        };
        let label = self.arena.child(anchor, ord);
        self.spawn_internal(SpawnTarget::Instr(rule.instr), binds, None, label, None, true)?;
        Ok(true)
    }

    fn prefetch(&mut self, arr: ArrayId, upto: i64) -> Result<(), String> {
        let window = 16i64;
        let a = &self.arrays[arr as usize];
        if a.hi.is_some() || a.rules.is_empty() {
            return Ok(());
        }
        let target = (upto + window).min(a.lo + a.budget as i64 - 1);
        let from = (a.supplied_to + 1).max(a.lo);
        for i in from..=target {
            self.ensure_elem(arr, i)?;
            self.maybe_instantiate_rule(arr, i)?;
        }
        if target > self.arrays[arr as usize].supplied_to {
            self.arrays[arr as usize].supplied_to = target;
        }
        Ok(())
    }

    // ---- readiness / scheduling ----------------------------------------------

    fn fence_ok(&self, id: TaskId) -> bool {
        let t = &self.tasks[id as usize];
        for &(c, k, acc) in &t.fence_cells {
            let cell = &self.cells[c as usize];
            let Some(si) = cell.slot_index(k) else {
                continue;
            };
            for &(other, oacc) in &cell.slots[si].touchers {
                if other == id {
                    continue;
                }
                if !fence_conflict(acc, oacc) {
                    continue;
                }
                let ol = self.tasks[other as usize].label;
                if self.arena.cmp(ol, t.label) == std::cmp::Ordering::Less {
                    return false;
                }
            }
        }
        true
    }

    fn gate_ok(&self, id: TaskId) -> bool {
        let t = &self.tasks[id as usize];
        for spec in &t.args {
            if !spec.default_candidate {
                continue;
            }
            match spec.bind {
                ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => {
                    let item = &self.items[self.resolve(it) as usize];
                    if item.is_resolved() || item.has_live_non_default_origin() {
                        return false;
                    }
                }
                ArgBind::OutSlice {
                    array, base, len, ..
                } => {
                    let Some(n) = len else { return false };
                    for k in 0..n {
                        let idx = base + k;
                        let arr = &self.arrays[array as usize];
                        let has_nd = arr
                            .origin_ranges
                            .iter()
                            .any(|r| !r.default_candidate && r.lo <= idx && idx <= r.hi);
                        if has_nd {
                            return false;
                        }
                        if let Some(&eit) = arr.elems.get(&idx) {
                            let item = &self.items[self.resolve(eit) as usize];
                            if item.is_resolved() || item.has_live_non_default_origin() {
                                return false;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        true
    }

    fn admit_ok(&self, id: TaskId) -> bool {
        match self.sched.policy.admission_limit() {
            None => true,
            Some(l) => self.tasks[id as usize].spec_depth <= l,
        }
    }

    fn runnable(&self, id: TaskId) -> bool {
        let t = &self.tasks[id as usize];
        t.state == TaskState::Pending
            && t.strict_pending == 0
            && self.admit_ok(id)
            && self.gate_ok(id)
            && self.fence_ok(id)
    }

    pub(crate) fn try_enqueue(&mut self, id: TaskId) {
        if self.tasks[id as usize].enqueued || !self.runnable(id) {
            return;
        }
        self.tasks[id as usize].enqueued = true;
        let t = &self.tasks[id as usize];
        let label_path = if self.sched.policy.promise != PromiseMode::Off {
            self.arena.path(t.label)
        } else {
            Vec::new()
        };
        let entry = SchedEntry {
            task: id,
            spawn_seq: t.spawn_seq,
            label_path,
            promise: t.promise.unwrap_or(f64::INFINITY),
        };
        let home = t.home_worker;
        self.sched.push(entry, home);
    }

    fn next_runnable(&mut self) -> Option<TaskId> {
        if let Some(script) = self.sched.policy.script.clone() {
            // Scripted replay: follow the recorded label order.
            let want = script.get(self.script_cursor)?.clone();
            let found = self
                .tasks
                .iter()
                .find(|t| {
                    t.state == TaskState::Pending && self.display_label(t.label) == want
                })
                .map(|t| t.id);
            if let Some(id) = found {
                if self.runnable(id) {
                    self.script_cursor += 1;
                    self.tasks[id as usize].enqueued = false;
                    return Some(id);
                }
            }
            return None;
        }
        loop {
            let (entry, worker, stolen) = self.sched.pop()?;
            let id = entry.task;
            self.tasks[id as usize].enqueued = false;
            if !self.runnable(id) {
                // Journal fence rejections so contention is visible.
                if self.tasks[id as usize].state == TaskState::Pending
                    && self.tasks[id as usize].strict_pending == 0
                    && !self.fence_ok(id)
                {
                    let label = self.tasks[id as usize].label;
                    let name = self.task_instr_name(id);
                    self.jrnl(EventKind::FenceWait, label, &name, String::new());
                    self.stats.fence_waits += 1;
                }
                continue;
            }
            if stolen {
                self.stats.steals += 1;
                let label = self.tasks[id as usize].label;
                let name = self.task_instr_name(id);
                self.jrnl(
                    EventKind::Steal,
                    label,
                    &name,
                    format!("thief={worker}"),
                );
            }
            self.tasks[id as usize].home_worker = worker;
            return Some(id);
        }
    }

    // ---- resolution ---------------------------------------------------------

    /// Write `v` into `id` (alias-chased). `by` identifies the writing task
    /// for multi-origin bookkeeping; None = engine-level base write.
    fn resolve_write(&mut self, id: ItemId, v: Value, by: Option<TaskId>) -> Result<(), String> {
        let t = self.resolve(id);
        let already = self.items[t as usize].is_resolved();
        if already {
            let item = &self.items[t as usize];
            if item.multi_origin || matches!(item.state, ItemState::Released) {
                // A losing candidate's write: discard, optionally verify.
                if self.verify_indet && !item.indet {
                    if let ItemState::Evaluated(old) = &item.state {
                        if !old.approx_eq(&v, 1e-9) {
                            return Err(format!(
                                "multi-origin disagreement: {old} vs {v}"
                            ));
                        }
                    }
                }
                self.stats.discarded_writes += 1;
                if let Some(by) = by {
                    self.mark_out_status(by, id, OutStatus::Wrote);
                }
                return Ok(());
            }
            return Err("write to an already evaluated item".into());
        }
        self.items[t as usize].state = ItemState::Evaluated(v.clone());
        self.stats.evaluations += 1;
        if let Some((arr, idx)) = self.items[t as usize].elem_of {
            let a = &mut self.arrays[arr as usize];
            a.evaluated_total += 1;
            a.live_evaluated += 1;
            if a.live_evaluated > a.peak_live {
                a.peak_live = a.live_evaluated;
            }
            let _ = idx;
        }
        let (label, name) = match by {
            Some(b) => (self.tasks[b as usize].label, self.task_instr_name(b)),
            None => (ROOT_LABEL, "<base>".to_string()),
        };
        self.jrnl(
            EventKind::Evaluate,
            label,
            &name,
            format!("i{}={}", t, v.key_string()),
        );
        if let Some(b) = by {
            self.mark_out_status(b, id, OutStatus::Wrote);
        }
        self.after_resolution(t, by);
        Ok(())
    }

    fn resolve_alias(&mut self, dst: ItemId, src: ItemId, by: TaskId) -> Result<(), String> {
        let d = self.resolve(dst);
        if self.items[d as usize].is_resolved() {
            let item = &self.items[d as usize];
            if item.multi_origin {
                self.stats.discarded_writes += 1;
                self.mark_out_status(by, dst, OutStatus::Aliased);
                return Ok(());
            }
            return Err("alias of an already resolved item".into());
        }
        let s = self.resolve(src);
        if s == d {
            return Err("alias would form a cycle".into());
        }
        self.items[d as usize].state = ItemState::Aliased(src);
        self.stats.aliases += 1;
        let label = self.tasks[by as usize].label;
        let name = self.task_instr_name(by);
        self.jrnl(EventKind::Alias, label, &name, format!("i{d} is i{s}"));
        self.mark_out_status(by, dst, OutStatus::Aliased);
        // Demand flows through the alias.
        let dd = self.items[d as usize].demand_depth;
        if dd != UNDEMANDED {
            self.demand_from(vec![DemandSeed::Item(src, dd)]);
        }
        // Pins flow through so release never drops an awaited value.
        if self.items[d as usize].pinned {
            self.items[s as usize].pinned = true;
        }
        self.after_resolution(d, Some(by));
        Ok(())
    }

    /// Common post-resolution bookkeeping: winner selection, waiter wakeup.
    fn after_resolution(&mut self, t: ItemId, by: Option<TaskId>) {
        // Multi-origin: demote every other candidate to loser.
        let losers: Vec<TaskId> = {
            let item = &mut self.items[t as usize];
            let resolved_origin_list: Vec<OriginEntry> = std::mem::take(&mut item.origins);
            item.resolved_by = by;
            resolved_origin_list
                .into_iter()
                .map(|o| o.task)
                .filter(|&tid| Some(tid) != by)
                .collect()
        };
        let had_losers = !losers.is_empty();
        for l in losers {
            if self.verify_indet {
                continue; // let candidates run and compare
            }
            let lt = &self.tasks[l as usize];
            if lt.state != TaskState::Pending {
                continue;
            }
            let pure = self.closures[lt.instr as usize]
                .as_ref()
                .map(|c| c.pure)
                .unwrap_or(true);
            if pure {
                self.cancel_task(l, "lost multi-origin race");
            }
        }
        // Wake strict waiters if now evaluated through the chain.
        if self.item_ready(t) {
            let waiters = std::mem::take(&mut self.items[t as usize].waiters);
            for w in waiters {
                if self.tasks[w as usize].state == TaskState::Pending {
                    let sp = &mut self.tasks[w as usize].strict_pending;
                    *sp = sp.saturating_sub(1);
                    self.try_enqueue(w);
                }
            }
        } else if let ItemState::Aliased(nxt) = self.items[t as usize].state.clone() {
            // Forward waiters to the alias target.
            let waiters = std::mem::take(&mut self.items[t as usize].waiters);
            let tgt = self.resolve(nxt);
            if self.item_ready(tgt) {
                for w in waiters {
                    if self.tasks[w as usize].state == TaskState::Pending {
                        let sp = &mut self.tasks[w as usize].strict_pending;
                        *sp = sp.saturating_sub(1);
                        self.try_enqueue(w);
                    }
                }
            } else {
                self.items[tgt as usize].waiters.extend(waiters);
            }
        }
        // Gates may open for default candidates of sibling groups; the
        // cheap pass is to re-check candidates registered on this item.
        let gate_candidates: Vec<TaskId> = self.items[t as usize]
            .origins
            .iter()
            .map(|o| o.task)
            .collect();
        for c in gate_candidates {
            self.try_enqueue(c);
        }
        if had_losers && self.sched.policy.drive == Drive::Demand {
            self.demand_recompute();
        }
    }

    fn release_check(&mut self, it: ItemId) {
        let item = &self.items[it as usize];
        if item.pending_consumers > 0
            || item.pinned
            || !item.rule_produced
            || !matches!(item.state, ItemState::Evaluated(_))
        {
            return;
        }
        let Some((arr, _idx)) = item.elem_of else {
            return;
        };
        if self.arrays[arr as usize].rules.is_empty() {
            return;
        }
        self.items[it as usize].state = ItemState::Released;
        let a = &mut self.arrays[arr as usize];
        a.live_evaluated = a.live_evaluated.saturating_sub(1);
    }

    pub fn release_element(&mut self, arr: ArrayId, idx: i64) -> Result<(), String> {
        let Some(&it) = self.arrays[arr as usize].elems.get(&idx) else {
            return Err("release of a never-materialized element".into());
        };
        if self.arrays[arr as usize].rule_for(idx).is_none() {
            return Err(format!(
                "element {}[{idx}] has no rule to re-derive it",
                self.arrays[arr as usize].name
            ));
        }
        if !matches!(self.items[it as usize].state, ItemState::Evaluated(_)) {
            return Ok(());
        }
        self.items[it as usize].state = ItemState::Released;
        let a = &mut self.arrays[arr as usize];
        a.live_evaluated = a.live_evaluated.saturating_sub(1);
        Ok(())
    }

    // ---- cancellation ---------------------------------------------------------

    fn cancel_task(&mut self, id: TaskId, why: &str) {
        if self.tasks[id as usize].state != TaskState::Pending {
            return;
        }
        self.tasks[id as usize].state = TaskState::Cancelled;
        self.live_tasks -= 1;
        self.stats.cancelled += 1;
        let label = self.tasks[id as usize].label;
        let name = self.task_instr_name(id);
        self.jrnl(EventKind::Cancel, label, &name, why.to_string());
        self.detach_task(id, true);
    }

    fn detach_out(&mut self, id: TaskId, it: ItemId, cancelled: bool) {
        let t = self.resolve(it);
        let item = &mut self.items[t as usize];
        if let Some(pos) = item.origins.iter().position(|o| o.task == id) {
            item.origins.remove(pos);
        }
        let now_empty = item.origins.is_empty() && !item.is_resolved();
        if now_empty && cancelled {
            let no_rule = match item.elem_of {
                Some((arr, idx)) => self.arrays[arr as usize].rule_for(idx).is_none(),
                None => true,
            };
            if no_rule {
                self.items[t as usize].state = ItemState::Cancelled;
            }
        }
        // Default candidates of this item may be unblocked.
        let cands: Vec<TaskId> = self.items[t as usize]
            .origins
            .iter()
            .map(|o| o.task)
            .collect();
        for c in cands {
            self.try_enqueue(c);
        }
    }

    /// Remove a finished or cancelled task from origin lists, ranges,
    /// fences, and consumer counts.
    fn detach_task(&mut self, id: TaskId, cancelled: bool) {
        let nargs = self.tasks[id as usize].args.len();
        for a in 0..nargs {
            match self.tasks[id as usize].args[a].bind.clone() {
                ArgBind::Out(it) => self.detach_out(id, it, cancelled),
                ArgBind::InOut { input, output } => {
                    self.detach_out(id, output, cancelled);
                    let pc = &mut self.items[input as usize].pending_consumers;
                    *pc = pc.saturating_sub(1);
                    self.release_check(input);
                }
                ArgBind::OutSlice { array, .. } => {
                    self.arrays[array as usize]
                        .origin_ranges
                        .retain(|r| r.task != id);
                    let cands: Vec<TaskId> = self.arrays[array as usize]
                        .origin_ranges
                        .iter()
                        .filter(|r| r.default_candidate)
                        .map(|r| r.task)
                        .collect();
                    for c in cands {
                        self.try_enqueue(c);
                    }
                }
                ArgBind::InItem(it) => {
                    let pc = &mut self.items[it as usize].pending_consumers;
                    *pc = pc.saturating_sub(1);
                    self.release_check(it);
                }
                ArgBind::InSlice {
                    array, base, len, ..
                } => {
                    // Only strict slices counted consumers.
                    let (_, decl, _) = self.param_info(id, a);
                    if decl.is_strict_in() {
                        if let Some(n) = len {
                            for k in 0..n {
                                if let Some(&eit) = self.arrays[array as usize].elems.get(&(base + k))
                                {
                                    let pc = &mut self.items[eit as usize].pending_consumers;
                                    *pc = pc.saturating_sub(1);
                                    self.release_check(eit);
                                }
                            }
                        }
                    }
                }
                ArgBind::InStream { array, from } => {
                    let (_, _, ty) = self.param_info(id, a);
                    let w = match ty {
                        ParamTy::Stream { window } => window as i64,
                        _ => 1,
                    };
                    for k in 0..w {
                        if let Some(&eit) = self.arrays[array as usize].elems.get(&(from + k)) {
                            let pc = &mut self.items[eit as usize].pending_consumers;
                            *pc = pc.saturating_sub(1);
                            self.release_check(eit);
                        }
                    }
                }
                _ => {}
            }
        }
        // Leave fences.
        let fences = self.tasks[id as usize].fence_cells.clone();
        for (c, k, _) in fences {
            let mut wake: Vec<TaskId> = Vec::new();
            {
                let cell = &mut self.cells[c as usize];
                if let Some(si) = cell.slot_index(k) {
                    cell.slots[si].touchers.retain(|&(t, _)| t != id);
                    wake.extend(cell.slots[si].touchers.iter().map(|&(t, _)| t));
                }
            }
            for w in wake {
                self.try_enqueue(w);
            }
        }
    }

    /// Cancel pure pending tasks that no longer matter: every out either
    /// resolved by someone else or undemanded. Propagates by iterating to a
    /// fixpoint. Returns the number cancelled.
    pub fn cancel_irrelevant(&mut self) -> u64 {
        let mut total = 0u64;
        loop {
            let mut round = Vec::new();
            for t in &self.tasks {
                if t.state != TaskState::Pending {
                    continue;
                }
                if t.slot.is_some() {
                    continue;
                }
                let pure = self.closures[t.instr as usize]
                    .as_ref()
                    .map(|c| c.pure)
                    .unwrap_or(false);
                if !pure {
                    continue;
                }
                if !self.task_relevant(t.id) {
                    round.push(t.id);
                }
            }
            if round.is_empty() {
                break;
            }
            for id in round {
                if self.tasks[id as usize].state == TaskState::Pending {
                    self.cancel_task(id, "irrelevant");
                    total += 1;
                }
            }
            if self.sched.policy.drive == Drive::Demand {
                self.demand_recompute();
            }
        }
        total
    }

    /// A pending task still matters if any of its outs is unresolved and
    /// demanded (directly or as a multi-origin candidacy of a demanded
    /// item).
    fn task_relevant(&self, id: TaskId) -> bool {
        let t = &self.tasks[id as usize];
        for spec in &t.args {
            match spec.bind {
                ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => {
                    let r = self.resolve(it);
                    let item = &self.items[r as usize];
                    if !item.is_resolved() && item.demand_depth != UNDEMANDED {
                        return true;
                    }
                }
                ArgBind::OutSlice {
                    array, base, len, ..
                } => {
                    let Some(n) = len else { return true };
                    let arr = &self.arrays[array as usize];
                    for k in 0..n {
                        let idx = base + k;
                        match arr.elems.get(&idx) {
                            Some(&eit) => {
                                let r = self.resolve(eit);
                                let item = &self.items[r as usize];
                                if !item.is_resolved() && item.demand_depth != UNDEMANDED {
                                    return true;
                                }
                            }
                            None => {
                                // Never materialized: nobody demanded it.
                            }
                        }
                    }
                }
                ArgBind::OutStream { .. } => return true,
                ArgBind::SlotOut(..) => return true,
                _ => {}
            }
        }
        false
    }

    // ---- execution -------------------------------------------------------------

    fn execute(&mut self, id: TaskId) -> Result<(), RunError> {
        // Slot targets resolve now; the fence admitted us after any binder.
        if self.tasks[id as usize].slot.is_some() {
            let c = self.tasks[id as usize].slot.unwrap();
            let bound = self.cells[c as usize].slots[0]
                .value
                .clone()
                .and_then(|v| v.as_routine());
            match bound {
                Some(instr) => {
                    self.tasks[id as usize].instr = instr;
                    self.tasks[id as usize].slot = None;
                    // Late binding: wire use-decl driven bookkeeping that
                    // spawn-time couldn't know. Strict ins were counted via
                    // the slot's declared prototype already.
                }
                None => {
                    let name = self.cells[c as usize].name.clone();
                    return Err(self.task_fault(id, format!("{name} has no value")));
                }
            }
        }
        let instr = self.tasks[id as usize].instr;
        let cl = self
            .closure(instr)
            .map_err(|e| self.task_fault(id, e))?;

        // Memoization: pure, chain-free instructions keyed by evaluated ins.
        if cl.memoizable && self.memo.is_some() {
            if let Some(key) = self.memo_key_for(id) {
                let hit = self.memo.as_mut().unwrap().lookup(&key);
                if let Some(outcome) = hit {
                    return self.replay_memo(id, &key, outcome);
                }
                return self.run_body(id, Some(key));
            }
        }
        self.run_body(id, None)
    }

    fn task_fault(&mut self, id: TaskId, msg: String) -> RunError {
        let f = TaskFault {
            task_label: self.display_label(self.tasks[id as usize].label),
            instr: self.task_instr_name(id),
            msg,
        };
        self.failed = Some(f.clone());
        RunError::Fault(f)
    }

    /// Memo key from evaluated strict/conditional ins; None when any
    /// argument shape defeats keying (slices keyed by content would be
    /// sound but only scalar and element args participate; others defer to
    /// a plain run).
    fn memo_key_for(&mut self, id: TaskId) -> Option<String> {
        let t = &self.tasks[id as usize];
        let instr = t.instr;
        let mut parts = Vec::new();
        for (a, spec) in t.args.iter().enumerate() {
            let p = &self.registry[instr as usize].proto.params[a];
            match (&spec.bind, p.role) {
                (ArgBind::InItem(it), Role::In) => {
                    if p.decl.eva {
                        let r = self.resolve(*it);
                        match &self.items[r as usize].state {
                            ItemState::Evaluated(v) => parts.push(v.key_string()),
                            _ => parts.push("?".to_string()),
                        }
                    } else {
                        parts.push("_".to_string());
                    }
                }
                (ArgBind::InSlice { len, .. }, Role::In) => {
                    // Delegated array argument: shape participates, values
                    // do not (they are reached through delegation).
                    if p.decl.eva {
                        return None;
                    }
                    parts.push(format!("s{}", len.unwrap_or(-1)));
                }
                (ArgBind::InStream { .. }, _) => return None,
                (ArgBind::InOut { .. }, _) => return None,
                (ArgBind::SlotIn(..), _) | (ArgBind::SlotOut(..), _) => return None,
                (_, Role::Out) => {}
                _ => return None,
            }
        }
        Some(memo_key(instr, &parts))
    }

    fn run_body(&mut self, id: TaskId, memo_rec: Option<String>) -> Result<(), RunError> {
        let instr = self.tasks[id as usize].instr;
        let body = match &self.registry[instr as usize].body {
            InstrBody::Host(f) => f.clone(),
            InstrBody::Curry { .. } => {
                return Err(self.task_fault(id, "curry reached execution unexpanded".into()))
            }
        };
        loop {
            self.tasks[id as usize].state = TaskState::Running;
            // Open down scopes (pins override the inherited seed).
            let down_cells = {
                let cl = self.closures[instr as usize].clone().unwrap_or_default();
                cl.down_cells
            };
            let pins = self.registry[instr as usize].down_pins.clone();
            let mut scope_cells = Vec::new();
            for c in down_cells {
                let parent_key = ctx_slot(&self.tasks[id as usize].down_ctx, c);
                let key = self.cells[c as usize].open_scope(id, parent_key);
                if let Some((_, v)) = pins.iter().find(|(pc, _)| *pc == c) {
                    self.cells[c as usize].slot_mut(key).value = Some(v.clone());
                }
                scope_cells.push(c);
            }
            self.tasks[id as usize].scope_cells = scope_cells;

            self.stats.steps += 1;
            let label = self.tasks[id as usize].label;
            let name = self.task_instr_name(id);
            let argsum = self.args_summary(id);
            self.jrnl(EventKind::Exec, label, &name, argsum);

            let mut ctx = TaskCtx {
                pool: self,
                task: id,
                spawns: Vec::new(),
                fresh: Vec::new(),
                effects: 0,
                elem_read_count: 0,
                recording: memo_rec.is_some(),
                rec: Outcome::default(),
                rec_ok: true,
            };
            let r = (body)(&mut ctx);
            let TaskCtx {
                spawns,
                fresh,
                effects,
                elem_read_count,
                rec,
                rec_ok,
                ..
            } = ctx;
            if elem_read_count as u64 > self.max_elem_reads_per_task {
                self.max_elem_reads_per_task = elem_read_count as u64;
            }
            match r {
                Err(BodyErr::Fault(m)) => {
                    return Err(self.task_fault(id, m));
                }
                Err(BodyErr::Blocked(items)) => {
                    if effects > 0 || !spawns.is_empty() || !fresh.is_empty() {
                        return Err(self.task_fault(
                            id,
                            "blocked after performing effects".into(),
                        ));
                    }
                    self.tasks[id as usize].state = TaskState::Pending;
                    let mut pend = 0;
                    for it in items {
                        let t = self.resolve(it);
                        if !self.item_ready(t) {
                            self.items[t as usize].waiters.push(id);
                            pend = 1; // any single arrival retriggers
                        }
                    }
                    if pend == 0 {
                        // Raced: something arrived during the body; retry.
                        self.try_enqueue(id);
                        return Ok(());
                    }
                    self.tasks[id as usize].strict_pending = pend;
                    return Ok(());
                }
                Ok(()) => {
                    // Inline self-recursion when the policy allows it.
                    if self.can_inline(id, &spawns) {
                        let rec0 = &spawns[0];
                        let args = rec0.args.clone();
                        let promise = rec0.promise;
                        self.tasks[id as usize].inline_runs += 1;
                        self.stats.inline_runs += 1;
                        self.tasks[id as usize].promise = promise.or(self.tasks[id as usize].promise);
                        // Rebind: fresh evaluated items for InValue are
                        // created by bind_task below.
                        self.rebind_inline(id, args)
                            .map_err(|e| self.task_fault(id, e))?;
                        continue;
                    }
                    return self.finish_body(id, spawns, fresh, memo_rec, rec, rec_ok);
                }
            }
        }
    }

    fn can_inline(&mut self, id: TaskId, spawns: &[SpawnRec]) -> bool {
        if self.sched.policy.maxunrl <= 1 {
            return false;
        }
        if self.sched.yield_flag {
            return false;
        }
        if self.tasks[id as usize].inline_runs + 1 >= self.sched.policy.maxunrl {
            return false;
        }
        if spawns.len() != 1 {
            return false;
        }
        let s = &spawns[0];
        let SpawnTarget::Instr(target) = s.target else {
            return false;
        };
        if target != self.tasks[id as usize].instr {
            return false;
        }
        if !self.closure(target).map(|c| c.pure).unwrap_or(false) {
            return false;
        }
        // Every in must be immediately readable; outs must be plain binds.
        for (a, spec) in s.args.iter().enumerate() {
            let p = &self.registry[target as usize].proto.params[a];
            match (&spec.bind, p.role) {
                (ArgBind::InValue(_), Role::In) => {}
                (ArgBind::InItem(it), Role::In) => {
                    if p.decl.is_strict_in() && !self.item_ready(*it) {
                        return false;
                    }
                }
                (ArgBind::Out(_), Role::Out) => {}
                (ArgBind::OutElem(..), Role::Out) => {}
                _ => return false,
            }
        }
        true
    }

    fn rebind_inline(&mut self, id: TaskId, args: Vec<BindSpec>) -> Result<(), String> {
        // Detach consumer counts from the previous binding set, keep outs
        // (they are rebound identically or delegated within the chain).
        let old = std::mem::take(&mut self.tasks[id as usize].args);
        for spec in &old {
            if let ArgBind::InItem(it) = spec.bind {
                let pc = &mut self.items[it as usize].pending_consumers;
                *pc = pc.saturating_sub(1);
                self.release_check(it);
            }
        }
        self.tasks[id as usize].args = args;
        let n = self.tasks[id as usize].args.len();
        self.tasks[id as usize].out_status = vec![OutStatus::Pending; n];
        // Re-run binding for consumer counts; origins for outs already
        // reference this task where they should.
        let nargs = n;
        for a in 0..nargs {
            let bind = self.tasks[id as usize].args[a].bind.clone();
            match bind {
                ArgBind::InValue(v) => {
                    let it = self.evaluated_item(v);
                    self.tasks[id as usize].args[a].bind = ArgBind::InItem(it);
                    self.items[it as usize].pending_consumers += 1;
                }
                ArgBind::InItem(it) => {
                    self.items[it as usize].pending_consumers += 1;
                }
                ArgBind::Out(it) => {
                    let r = self.resolve(it);
                    if !self.items[r as usize]
                        .origins
                        .iter()
                        .any(|o| o.task == id)
                    {
                        self.items[r as usize].origins.push(OriginEntry {
                            task: id,
                            default_candidate: false,
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn args_summary(&self, id: TaskId) -> String {
        let t = &self.tasks[id as usize];
        let mut parts = Vec::new();
        for spec in &t.args {
            let s = match &spec.bind {
                ArgBind::InItem(it) => {
                    let r = self.resolve(*it);
                    match &self.items[r as usize].state {
                        ItemState::Evaluated(v) => v.key_string(),
                        _ => format!("i{r}"),
                    }
                }
                ArgBind::InValue(v) => v.key_string(),
                ArgBind::InElem(a, i) => format!("{}[{i}]", self.arrays[*a as usize].name),
                ArgBind::InSlice {
                    array, base, len, ..
                } => format!(
                    "{}[{base}:{}]",
                    self.arrays[*array as usize].name,
                    len.map(|n| (base + n - 1).to_string()).unwrap_or_default()
                ),
                ArgBind::InStream { array, from } => {
                    format!("{}[{from}:]", self.arrays[*array as usize].name)
                }
                ArgBind::InOut { input, output } => format!("io:i{input}>i{output}"),
                ArgBind::Out(it) => format!("o:i{}", self.resolve(*it)),
                ArgBind::OutElem(a, i) => {
                    format!("o:{}[{i}]", self.arrays[*a as usize].name)
                }
                ArgBind::OutSlice {
                    array, base, len, ..
                } => format!(
                    "o:{}[{base}:{}]",
                    self.arrays[*array as usize].name,
                    len.map(|n| (base + n - 1).to_string()).unwrap_or_default()
                ),
                ArgBind::OutStream { array, from } => {
                    format!("o:{}[{from}:]", self.arrays[*array as usize].name)
                }
                ArgBind::CellIn(c) | ArgBind::SlotIn(c, _) => {
                    format!("nl:{}", self.cells[*c as usize].name)
                }
                ArgBind::CellOut(c) | ArgBind::SlotOut(c, _) => {
                    format!("nl!:{}", self.cells[*c as usize].name)
                }
            };
            parts.push(s);
        }
        parts.join(",")
    }

    fn finish_body(
        &mut self,
        id: TaskId,
        spawns: Vec<SpawnRec>,
        fresh: Vec<ItemId>,
        memo_key: Option<String>,
        mut rec: Outcome,
        rec_ok: bool,
    ) -> Result<(), RunError> {
        // Materialize deferred spawns in order.
        let parent_label = self.tasks[id as usize].label;
        for s in spawns {
            let ord = {
                let t = &mut self.tasks[id as usize];
                t.next_ordinal += 1;
                t.next_ordinal
            };
            let label = self.arena.child(parent_label, ord);
            let args = s.args.clone();
            self.spawn_internal(s.target.clone(), args, Some(id), label, s.promise, false)
                .map_err(|e| self.task_fault(id, e))?;
        }
        // Out enforcement on scalar outs.
        let nargs = self.tasks[id as usize].args.len();
        for a in 0..nargs {
            let (role, decl, _ty) = self.param_info(id, a);
            if role != Role::Out && role != Role::InOut {
                continue;
            }
            let scalar = matches!(
                self.tasks[id as usize].args[a].bind,
                ArgBind::Out(_) | ArgBind::InOut { .. }
            );
            if !scalar {
                continue;
            }
            if self.tasks[id as usize].out_status[a] == OutStatus::Pending {
                if decl.ign {
                    self.tasks[id as usize].out_status[a] = OutStatus::Ignored;
                } else {
                    let pname = self.registry[self.tasks[id as usize].instr as usize].proto.params
                        [a]
                        .name;
                    return Err(self.task_fault(
                        id,
                        format!("out {pname} left unresolved without an ignore right"),
                    ));
                }
            }
        }
        // Store memo outcome.
        if let (Some(key), Some(_)) = (memo_key, self.memo.as_ref()) {
            if rec_ok {
                rec.fresh_items = fresh.len();
                self.memo.as_mut().unwrap().store(key, rec);
            }
        }
        self.complete(id);
        Ok(())
    }

    fn complete(&mut self, id: TaskId) {
        self.tasks[id as usize].state = TaskState::Done;
        self.live_tasks -= 1;
        self.detach_task(id, false);
    }

    fn replay_memo(&mut self, id: TaskId, _key: &str, outcome: Outcome) -> Result<(), RunError> {
        self.stats.memo_hits += 1;
        let label = self.tasks[id as usize].label;
        let name = self.task_instr_name(id);
        self.jrnl(EventKind::MemoHit, label, &name, String::new());
        let fresh: Vec<ItemId> = (0..outcome.fresh_items)
            .map(|_| self.new_item_raw(None))
            .collect();
        // Writes and aliases against this task's own bindings.
        for (p, v) in &outcome.writes {
            let it = self
                .out_item_of(id, *p)
                .ok_or_else(|| self.task_fault(id, "memo write target missing".into()))?;
            self.resolve_write(it, v.clone(), Some(id))
                .map_err(|e| self.task_fault(id, e))?;
        }
        for (p, tgt) in &outcome.aliases.clone() {
            let dst = self
                .out_item_of(id, *p)
                .ok_or_else(|| self.task_fault(id, "memo alias target missing".into()))?;
            let src = self
                .tpl_item(id, tgt, &fresh)
                .map_err(|e| self.task_fault(id, e))?;
            self.resolve_alias(dst, src, id)
                .map_err(|e| self.task_fault(id, e))?;
        }
        for (p, rel, v) in &outcome.elem_writes {
            let (arr, base) = match self.tasks[id as usize].args[*p].bind {
                ArgBind::OutSlice { array, base, .. } => (array, base),
                _ => return Err(self.task_fault(id, "memo element write target missing".into())),
            };
            let it = self
                .ensure_elem(arr, base + rel)
                .map_err(|e| self.task_fault(id, e))?;
            self.resolve_write(it, v.clone(), Some(id))
                .map_err(|e| self.task_fault(id, e))?;
        }
        // Children.
        let spawns = outcome.spawns.clone();
        let parent_label = label;
        for sp in spawns {
            let mut args = Vec::new();
            for tb in &sp.args {
                let bind = self
                    .tpl_bind(id, &tb.arg, &fresh, sp.instr, args.len())
                    .map_err(|e| self.task_fault(id, e))?;
                let mut spec = BindSpec::new(bind);
                spec.default_candidate = tb.default_candidate;
                spec.indet = tb.indet;
                args.push(spec);
            }
            let ord = {
                let t = &mut self.tasks[id as usize];
                t.next_ordinal += 1;
                t.next_ordinal
            };
            let lab = self.arena.child(parent_label, ord);
            self.spawn_internal(
                SpawnTarget::Instr(sp.instr),
                args,
                Some(id),
                lab,
                sp.promise,
                false,
            )
            .map_err(|e| self.task_fault(id, e))?;
        }
        // Outs not covered by the template must carry ignore rights or be
        // delegated; enforcement mirrors finish_body.
        let nargs = self.tasks[id as usize].args.len();
        for a in 0..nargs {
            let (role, decl, _) = self.param_info(id, a);
            if role != Role::Out && role != Role::InOut {
                continue;
            }
            if matches!(
                self.tasks[id as usize].args[a].bind,
                ArgBind::Out(_) | ArgBind::InOut { .. }
            ) && self.tasks[id as usize].out_status[a] == OutStatus::Pending
            {
                if decl.ign {
                    self.tasks[id as usize].out_status[a] = OutStatus::Ignored;
                } else {
                    return Err(self.task_fault(
                        id,
                        "memo replay left an out unresolved".into(),
                    ));
                }
            }
        }
        self.complete(id);
        Ok(())
    }

    fn out_item_of(&self, id: TaskId, p: usize) -> Option<ItemId> {
        match self.tasks[id as usize].args.get(p)?.bind {
            ArgBind::Out(it) => Some(it),
            ArgBind::InOut { output, .. } => Some(output),
            _ => None,
        }
    }

    fn tpl_item(&mut self, id: TaskId, t: &TplArg, fresh: &[ItemId]) -> Result<ItemId, String> {
        match t {
            TplArg::Fresh(i) => fresh
                .get(*i)
                .copied()
                .ok_or_else(|| "memo fresh index out of range".into()),
            TplArg::Param(p) => match self.tasks[id as usize].args[*p].bind {
                ArgBind::InItem(it) => Ok(it),
                ArgBind::Out(it) => Ok(it),
                ArgBind::InOut { input, .. } => Ok(input),
                _ => Err("memo param reference is not an item".into()),
            },
            TplArg::ParamElem { param, rel } => {
                let (arr, base) = match self.tasks[id as usize].args[*param].bind {
                    ArgBind::InSlice { array, base, .. }
                    | ArgBind::OutSlice { array, base, .. } => (array, base),
                    _ => return Err("memo element reference is not a slice".into()),
                };
                self.ensure_elem(arr, base + rel)
            }
            TplArg::Lit(v) => Ok(self.evaluated_item(v.clone())),
            _ => Err("memo template argument cannot resolve to an item".into()),
        }
    }

    fn tpl_bind(
        &mut self,
        id: TaskId,
        t: &TplArg,
        fresh: &[ItemId],
        target: InstrId,
        pos: usize,
    ) -> Result<ArgBind, String> {
        let role = self.registry[target as usize]
            .proto
            .params
            .get(pos)
            .map(|p| p.role)
            .unwrap_or(Role::In);
        Ok(match t {
            TplArg::Lit(v) => ArgBind::InValue(v.clone()),
            TplArg::Fresh(i) => {
                let it = fresh
                    .get(*i)
                    .copied()
                    .ok_or("memo fresh index out of range")?;
                if role == Role::Out {
                    ArgBind::Out(it)
                } else {
                    ArgBind::InItem(it)
                }
            }
            TplArg::FreshInOut { input, output } => ArgBind::InOut {
                input: fresh.get(*input).copied().ok_or("memo fresh input")?,
                output: fresh.get(*output).copied().ok_or("memo fresh output")?,
            },
            TplArg::Param(p) => {
                let b = self.tasks[id as usize].args[*p].bind.clone();
                match (b, role) {
                    (ArgBind::InItem(it), Role::In) => ArgBind::InItem(it),
                    (ArgBind::Out(it), Role::Out) => ArgBind::Out(it),
                    (ArgBind::InOut { input, output }, _) => ArgBind::InOut { input, output },
                    (ArgBind::InSlice { array, base, lo, len }, _) => ArgBind::InSlice {
                        array,
                        base,
                        lo,
                        len,
                    },
                    (ArgBind::OutSlice { array, base, lo, len }, _) => ArgBind::OutSlice {
                        array,
                        base,
                        lo,
                        len,
                    },
                    (other, _) => other,
                }
            }
            TplArg::ParamSlice {
                param,
                rel_base,
                lo,
                len,
            } => {
                let (arr, pbase, out) = match self.tasks[id as usize].args[*param].bind {
                    ArgBind::InSlice { array, base, .. } => (array, base, false),
                    ArgBind::OutSlice { array, base, .. } => (array, base, true),
                    _ => return Err("memo slice reference is not a slice".into()),
                };
                if out || role == Role::Out {
                    ArgBind::OutSlice {
                        array: arr,
                        base: pbase + rel_base,
                        lo: *lo,
                        len: *len,
                    }
                } else {
                    ArgBind::InSlice {
                        array: arr,
                        base: pbase + rel_base,
                        lo: *lo,
                        len: *len,
                    }
                }
            }
            TplArg::ParamElem { param, rel } => {
                let (arr, base) = match self.tasks[id as usize].args[*param].bind {
                    ArgBind::InSlice { array, base, .. }
                    | ArgBind::OutSlice { array, base, .. } => (array, base),
                    _ => return Err("memo element reference is not a slice".into()),
                };
                if role == Role::Out {
                    ArgBind::OutElem(arr, base + rel)
                } else {
                    ArgBind::InElem(arr, base + rel)
                }
            }
            TplArg::ParamStream { param, rel } => {
                let (arr, from) = match self.tasks[id as usize].args[*param].bind {
                    ArgBind::InStream { array, from } => (array, from),
                    _ => return Err("memo stream reference is not a stream".into()),
                };
                ArgBind::InStream {
                    array: arr,
                    from: from + rel,
                }
            }
        })
    }

    // ---- run loop ---------------------------------------------------------------

    pub fn run(&mut self) -> Result<(), RunError> {
        loop {
            match self.run_steps(u64::MAX)? {
                RunOutcome::Finished => return Ok(()),
                RunOutcome::Paused => continue,
            }
        }
    }

    pub fn run_steps(&mut self, budget: u64) -> Result<RunOutcome, RunError> {
        let mut done = 0u64;
        loop {
            if let Some(b) = self.budget_hit {
                return Err(RunError::BudgetExhausted { budget: b });
            }
            if let Some(f) = &self.failed {
                return Err(RunError::Fault(f.clone()));
            }
            if done >= budget {
                return Ok(RunOutcome::Paused);
            }
            match self.next_runnable() {
                Some(id) => {
                    let r = self.execute(id);
                    if let Some(b) = self.budget_hit {
                        return Err(RunError::BudgetExhausted { budget: b });
                    }
                    r?;
                    if let Some(f) = &self.failed {
                        return Err(RunError::Fault(f.clone()));
                    }
                    done += 1;
                }
                None => {
                    if self.live_tasks == 0 {
                        return Ok(RunOutcome::Finished);
                    }
                    // Demand marks may be stale; refresh once.
                    self.demand_recompute();
                    if self.requeue_all() {
                        continue;
                    }
                    if self.cancel_irrelevant() > 0 {
                        continue;
                    }
                    if self.live_tasks == 0 {
                        return Ok(RunOutcome::Finished);
                    }
                    return Err(RunError::Deadlock {
                        report: self.deadlock_report(),
                    });
                }
            }
        }
    }

    fn requeue_all(&mut self) -> bool {
        let pend: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|t| t.state == TaskState::Pending && !t.enqueued)
            .map(|t| t.id)
            .collect();
        let mut any = false;
        for t in pend {
            self.try_enqueue(t);
            any |= self.tasks[t as usize].enqueued;
        }
        any
    }

    /// Shortest dependence cycle through pending tasks, or the origin-less
    /// items blocking progress.
    fn deadlock_report(&self) -> String {
        // Build edges task -> task via strict unresolved ins.
        let pending: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|t| t.state == TaskState::Pending)
            .map(|t| t.id)
            .collect();
        let mut edges: HashMap<TaskId, Vec<(TaskId, ItemId)>> = HashMap::new();
        let mut originless: Vec<(ItemId, TaskId)> = Vec::new();
        for &tid in &pending {
            let t = &self.tasks[tid as usize];
            for (a, spec) in t.args.iter().enumerate() {
                let (role, decl, _) = self.param_info(tid, a);
                if role == Role::Out || !decl.is_strict_in() {
                    continue;
                }
                let items: Vec<ItemId> = match &spec.bind {
                    ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => vec![*it],
                    ArgBind::InSlice {
                        array, base, len, ..
                    } => {
                        let mut v = Vec::new();
                        if let Some(n) = len {
                            for k in 0..*n {
                                if let Some(&e) = self.arrays[*array as usize].elems.get(&(base + k))
                                {
                                    v.push(e);
                                }
                            }
                        }
                        v
                    }
                    _ => Vec::new(),
                };
                for it in items {
                    let r = self.resolve(it);
                    if self.item_ready(r) {
                        continue;
                    }
                    let item = &self.items[r as usize];
                    let mut any = false;
                    for o in &item.origins {
                        edges.entry(tid).or_default().push((o.task, r));
                        any = true;
                    }
                    if let Some((arr, idx)) = item.elem_of {
                        for rr in &self.arrays[arr as usize].origin_ranges {
                            if rr.lo <= idx && idx <= rr.hi {
                                edges.entry(tid).or_default().push((rr.task, r));
                                any = true;
                            }
                        }
                    }
                    if !any {
                        originless.push((r, tid));
                    }
                }
            }
        }
        // BFS from each pending task for the shortest cycle.
        let mut best: Option<Vec<(TaskId, ItemId)>> = None;
        for &start in &pending {
            let mut prev: HashMap<TaskId, (TaskId, ItemId)> = HashMap::new();
            let mut q = std::collections::VecDeque::new();
            q.push_back(start);
            let mut seen = std::collections::HashSet::new();
            seen.insert(start);
            while let Some(u) = q.pop_front() {
                for &(v, via) in edges.get(&u).map(|e| e.as_slice()).unwrap_or(&[]) {
                    if v == start {
                        // Reconstruct.
                        let mut path = vec![(u, via)];
                        let mut cur = u;
                        while cur != start {
                            let (p, pv) = prev[&cur];
                            path.push((p, pv));
                            cur = p;
                        }
                        path.reverse();
                        if best.as_ref().map_or(true, |b| path.len() < b.len()) {
                            best = Some(path);
                        }
                        break;
                    }
                    if seen.insert(v) {
                        prev.insert(v, (u, via));
                        q.push_back(v);
                    }
                }
            }
        }
        if let Some(cycle) = best {
            let mut s = String::from("dependence cycle: ");
            for (t, via) in cycle {
                let name = self.task_instr_name(t);
                let label = self.display_label(self.tasks[t as usize].label);
                s.push_str(&format!("{name}[{label}] -(i{via})-> "));
            }
            s.push_str("(back to start)");
            return s;
        }
        if !originless.is_empty() {
            let mut s = String::from("items with no possible origin: ");
            let parts: Vec<String> = originless
                .iter()
                .take(8)
                .map(|(it, t)| {
                    let tn = self.task_instr_name(*t);
                    let nm = self.items[*it as usize]
                        .name
                        .clone()
                        .map(|b| b.to_string())
                        .unwrap_or_else(|| format!("i{it}"));
                    format!("{nm} (awaited by {tn})")
                })
                .collect();
            s.push_str(&parts.join(", "));
            return s;
        }
        format!(
            "no runnable task among {} pending (blocked on admission or fences)",
            pending.len()
        )
    }

    /// Count of shared evaluated in-items between two pending tasks: a
    /// colocation hint.
    pub fn locality_hint(&self, a: TaskId, b: TaskId) -> usize {
        let gather = |id: TaskId| -> std::collections::HashSet<ItemId> {
            let mut s = std::collections::HashSet::new();
            for spec in &self.tasks[id as usize].args {
                match spec.bind {
                    ArgBind::InItem(it) => {
                        let r = self.resolve(it);
                        if self.item_ready(r) {
                            s.insert(r);
                        }
                    }
                    ArgBind::InSlice {
                        array, base, len, ..
                    } => {
                        if let Some(n) = len {
                            for k in 0..n {
                                if let Some(&e) = self.arrays[array as usize].elems.get(&(base + k))
                                {
                                    let r = self.resolve(e);
                                    if self.item_ready(r) {
                                        s.insert(r);
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            s
        };
        gather(a).intersection(&gather(b)).count()
    }

    pub fn live_task_count(&self) -> u64 {
        self.live_tasks
    }

    /// Post-hoc relevance: tasks whose execution contributed to a pinned
    /// item. Used by conservative-drive audits.
    pub fn executed_irrelevant(&self) -> Vec<TaskId> {
        // Mark items reachable from pinned ones back through resolving
        // tasks' ins.
        let mut relevant_tasks: std::collections::HashSet<TaskId> = Default::default();
        let mut item_work: Vec<ItemId> = (0..self.items.len() as u32)
            .filter(|&i| self.items[i as usize].pinned)
            .collect();
        let mut seen_items: std::collections::HashSet<ItemId> = item_work.iter().copied().collect();
        while let Some(it) = item_work.pop() {
            // Credit every link of the alias chain: the task that aliased
            // an item toward the value chose it as surely as the writer.
            let mut resolvers: Vec<TaskId> = Vec::new();
            let mut cur = it;
            loop {
                if let Some(by) = self.items[cur as usize].resolved_by {
                    resolvers.push(by);
                }
                match self.items[cur as usize].state {
                    ItemState::Aliased(n) => {
                        if seen_items.insert(n) {
                            item_work.push(n);
                        }
                        if n == cur {
                            break;
                        }
                        cur = n;
                    }
                    _ => break,
                }
            }
            for by in resolvers {
                if !relevant_tasks.insert(by) {
                    continue;
                }
                self.scan_relevant_ins(by, &mut seen_items, &mut item_work);
            }
        }
        self.tasks
            .iter()
            .filter(|t| t.state == TaskState::Done && !relevant_tasks.contains(&t.id))
            .map(|t| t.id)
            .collect()
    }

    fn scan_relevant_ins(
        &self,
        by: TaskId,
        seen_items: &mut std::collections::HashSet<ItemId>,
        item_work: &mut Vec<ItemId>,
    ) {
        // A task depends on what it actually read, plus every strict in:
        // strictness forced the evaluation whether or not the body looked.
        // Conditional ins that went unread stay out of the relevant set.
        for &r in &self.tasks[by as usize].reads {
            if seen_items.insert(r) {
                item_work.push(r);
            }
        }
        let instr = self.tasks[by as usize].instr;
        for (a, spec) in self.tasks[by as usize].args.iter().enumerate() {
            let strict = if instr == u32::MAX {
                true
            } else {
                self.registry[instr as usize]
                    .proto
                    .params
                    .get(a)
                    .map(|p| p.role != Role::Out && p.decl.is_strict_in())
                    .unwrap_or(false)
            };
            if !strict {
                continue;
            }
            match spec.bind {
                ArgBind::InItem(i2) | ArgBind::InOut { input: i2, .. } => {
                    if seen_items.insert(i2) {
                        item_work.push(i2);
                    }
                }
                ArgBind::InSlice {
                    array, base, len, ..
                } => {
                    if let Some(n) = len {
                        for k in 0..n {
                            if let Some(&e) = self.arrays[array as usize].elems.get(&(base + k)) {
                                if seen_items.insert(e) {
                                    item_work.push(e);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

fn push_touch(v: &mut Vec<(CellId, Access)>, c: CellId, a: Access) {
    for (ec, ea) in v.iter_mut() {
        if *ec == c {
            if a == Access::Write {
                *ea = Access::Write;
            }
            return;
        }
    }
    v.push((c, a));
}

fn ctx_slot(ctx: &[(CellId, SlotKey)], c: CellId) -> SlotKey {
    ctx.iter()
        .find(|(cc, _)| *cc == c)
        .map(|(_, k)| *k)
        .unwrap_or(SlotKey::Root)
}

fn set_ctx(ctx: &mut Vec<(CellId, SlotKey)>, c: CellId, k: SlotKey) {
    for (cc, kk) in ctx.iter_mut() {
        if *cc == c {
            *kk = k;
            return;
        }
    }
    ctx.push((c, k));
}

fn covers_is_empty(arr: &ArrayDecl, idx: i64) -> bool {
    !arr.origin_ranges.iter().any(|r| r.lo <= idx && idx <= r.hi)
}

#[derive(Debug, Clone, Copy)]
enum DemandSeed {
    Item(ItemId, u32),
    Task(TaskId, u32),
}

// ======================================================================
// Task context: the API a body sees.
// ======================================================================

pub struct TaskCtx<'p> {
    pool: &'p mut Pool,
    pub task: TaskId,
    spawns: Vec<SpawnRec>,
    fresh: Vec<ItemId>,
    effects: u32,
    elem_read_count: u32,
    recording: bool,
    rec: Outcome,
    rec_ok: bool,
}

impl<'p> TaskCtx<'p> {
    fn instr(&self) -> InstrId {
        self.pool.tasks[self.task as usize].instr
    }

    fn decl(&self, p: usize) -> Result<(Role, crate::usedecl::UseDecl, ParamTy), BodyErr> {
        let instr = self.instr();
        let params = &self.pool.registry[instr as usize].proto.params;
        params
            .get(p)
            .map(|pp| (pp.role, pp.decl, pp.ty))
            .ok_or_else(|| BodyErr::Fault(format!("no parameter {p}")))
    }

    fn bind(&self, p: usize) -> Result<ArgBind, BodyErr> {
        self.pool.tasks[self.task as usize]
            .args
            .get(p)
            .map(|s| s.bind.clone())
            .ok_or_else(|| BodyErr::Fault(format!("no argument {p}")))
    }

    pub fn nargs(&self) -> usize {
        self.pool.tasks[self.task as usize].args.len()
    }

    pub fn yield_requested(&self) -> bool {
        self.pool.sched.yield_flag
    }

    // -- reads ---------------------------------------------------------------

    pub fn read(&mut self, p: usize) -> Result<Value, BodyErr> {
        let (role, decl, _) = self.decl(p)?;
        if role == Role::Out {
            return Err(BodyErr::Fault(format!("reading out parameter {p}")));
        }
        if !decl.eva {
            return Err(BodyErr::Fault(format!(
                "parameter {p} is not declared for evaluation"
            )));
        }
        match self.bind(p)? {
            ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => {
                let r = self.pool.resolve(it);
                match &self.pool.items[r as usize].state {
                    ItemState::Evaluated(v) => {
                        let v = v.clone();
                        self.note_read(r);
                        Ok(v)
                    }
                    ItemState::Cancelled => Err(BodyErr::Fault(format!(
                        "parameter {p} reads a cancelled item"
                    ))),
                    _ => Err(BodyErr::Blocked(vec![r])),
                }
            }
            ArgBind::SlotIn(c, k) => {
                let cell = &self.pool.cells[c as usize];
                let si = cell
                    .slot_index(k)
                    .ok_or_else(|| BodyErr::Fault("cell slot missing".into()))?;
                cell.slots[si]
                    .value
                    .clone()
                    .ok_or_else(|| BodyErr::Fault(format!("{} has no value", cell.name)))
            }
            other => Err(BodyErr::Fault(format!(
                "parameter {p} is not a scalar in ({other:?})"
            ))),
        }
    }

    pub fn read_opt(&mut self, p: usize) -> Result<Option<Value>, BodyErr> {
        let (_, decl, _) = self.decl(p)?;
        if !decl.eva {
            return Err(BodyErr::Fault(format!(
                "parameter {p} is not declared for evaluation"
            )));
        }
        match self.bind(p)? {
            ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => {
                let r = self.pool.resolve(it);
                match &self.pool.items[r as usize].state {
                    ItemState::Evaluated(v) => {
                        let v = v.clone();
                        self.note_read(r);
                        Ok(Some(v))
                    }
                    _ => Ok(None),
                }
            }
            _ => Ok(None),
        }
    }

    fn note_read(&mut self, item: ItemId) {
        let t = &mut self.pool.tasks[self.task as usize];
        if !t.reads.contains(&item) {
            t.reads.push(item);
        }
    }

    pub fn block_on(&self, params: &[usize]) -> BodyErr {
        let mut items = Vec::new();
        for &p in params {
            if let Some(spec) = self.pool.tasks[self.task as usize].args.get(p) {
                match spec.bind {
                    ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => {
                        items.push(self.pool.resolve(it))
                    }
                    _ => {}
                }
            }
        }
        BodyErr::Blocked(items)
    }

    pub fn read_elem(&mut self, p: usize, j: i64) -> Result<Value, BodyErr> {
        let (arr, idx) = self.elem_coords(p, j)?;
        self.elem_read_count += 1;
        self.pool
            .elem_reads
            .entry(arr)
            .or_default()
            .insert(idx);
        let it = self
            .pool
            .ensure_elem(arr, idx)
            .map_err(BodyErr::Fault)?;
        let r = self.pool.resolve(it);
        match &self.pool.items[r as usize].state {
            ItemState::Evaluated(v) => {
                let v = v.clone();
                self.note_read(r);
                Ok(v)
            }
            ItemState::Cancelled => Err(BodyErr::Fault("element read of a cancelled item".into())),
            _ => {
                // Rule-derivable elements can be demanded on the spot.
                let _ = self
                    .pool
                    .maybe_instantiate_rule(arr, idx)
                    .map_err(BodyErr::Fault)?;
                Err(BodyErr::Blocked(vec![r]))
            }
        }
    }

    pub fn read_elem_opt(&mut self, p: usize, j: i64) -> Result<Option<Value>, BodyErr> {
        let (arr, idx) = self.elem_coords(p, j)?;
        match self.pool.arrays[arr as usize].elems.get(&idx) {
            Some(&it) => {
                let r = self.pool.resolve(it);
                match &self.pool.items[r as usize].state {
                    ItemState::Evaluated(v) => {
                        let v = v.clone();
                        self.note_read(r);
                        Ok(Some(v))
                    }
                    _ => Ok(None),
                }
            }
            None => Ok(None),
        }
    }

    fn elem_coords(&self, p: usize, j: i64) -> Result<(ArrayId, i64), BodyErr> {
        match self.bind(p)? {
            ArgBind::InSlice {
                array, base, lo, ..
            }
            | ArgBind::OutSlice {
                array, base, lo, ..
            } => Ok((array, base + (j - lo))),
            ArgBind::InStream { array, from } => Ok((array, from + j)),
            ArgBind::OutStream { array, from } => Ok((array, from + j)),
            other => Err(BodyErr::Fault(format!(
                "parameter {p} is not an array ({other:?})"
            ))),
        }
    }

    pub fn slice_len(&self, p: usize) -> Result<Option<i64>, BodyErr> {
        match self.bind(p)? {
            ArgBind::InSlice { len, .. } | ArgBind::OutSlice { len, .. } => Ok(len),
            ArgBind::InStream { .. } | ArgBind::OutStream { .. } => Ok(None),
            _ => Err(BodyErr::Fault(format!("parameter {p} is not an array"))),
        }
    }

    pub fn slice_lo(&self, p: usize) -> Result<i64, BodyErr> {
        match self.bind(p)? {
            ArgBind::InSlice { lo, .. } | ArgBind::OutSlice { lo, .. } => Ok(lo),
            ArgBind::InStream { .. } | ArgBind::OutStream { .. } => Ok(0),
            _ => Err(BodyErr::Fault(format!("parameter {p} is not an array"))),
        }
    }

    // -- writes ----------------------------------------------------------------

    pub fn write(&mut self, p: usize, v: Value) -> Result<(), BodyErr> {
        let (role, decl, _) = self.decl(p)?;
        if role == Role::In {
            return Err(BodyErr::Fault(format!("writing in parameter {p}")));
        }
        if !decl.eva {
            return Err(BodyErr::Fault(format!(
                "out parameter {p} is not declared for evaluation"
            )));
        }
        match self.bind(p)? {
            ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => {
                self.effects += 1;
                if self.recording {
                    self.rec.writes.push((p, v.clone()));
                }
                self.pool
                    .resolve_write(it, v, Some(self.task))
                    .map_err(BodyErr::Fault)
            }
            ArgBind::SlotOut(c, k) => {
                self.effects += 1;
                self.rec_ok = false;
                let name = self.pool.cells[c as usize].name.clone();
                self.pool.cells[c as usize].slot_mut(k).value = Some(v.clone());
                let label = self.pool.tasks[self.task as usize].label;
                let iname = self.pool.task_instr_name(self.task);
                self.pool.jrnl(
                    EventKind::Evaluate,
                    label,
                    &iname,
                    format!("nl:{name}={}", v.key_string()),
                );
                let idx = self.arg_index_status(p);
                if let Some(a) = idx {
                    self.pool.tasks[self.task as usize].out_status[a] = OutStatus::Wrote;
                }
                Ok(())
            }
            other => Err(BodyErr::Fault(format!(
                "parameter {p} is not a scalar out ({other:?})"
            ))),
        }
    }

    fn arg_index_status(&self, p: usize) -> Option<usize> {
        if p < self.pool.tasks[self.task as usize].out_status.len() {
            Some(p)
        } else {
            None
        }
    }

    pub fn write_elem(&mut self, p: usize, j: i64, v: Value) -> Result<(), BodyErr> {
        let (role, decl, _) = self.decl(p)?;
        if role == Role::In {
            return Err(BodyErr::Fault(format!("writing in parameter {p}")));
        }
        if !decl.eva {
            return Err(BodyErr::Fault(format!(
                "out parameter {p} is not declared for evaluation"
            )));
        }
        let (arr, idx) = self.elem_coords(p, j)?;
        let (rel, recordable) = match self.bind(p)? {
            ArgBind::OutSlice { base, .. } => (idx - base, true),
            ArgBind::OutStream { .. } => (0, false),
            _ => return Err(BodyErr::Fault(format!("parameter {p} is not an out array"))),
        };
        self.effects += 1;
        if self.recording {
            if recordable {
                self.rec.elem_writes.push((p, rel, v.clone()));
            } else {
                self.rec_ok = false;
            }
        }
        let it = self.pool.ensure_elem(arr, idx).map_err(BodyErr::Fault)?;
        self.pool
            .resolve_write(it, v, Some(self.task))
            .map_err(BodyErr::Fault)
    }

    pub fn alias_to_param(&mut self, dst: usize, src: usize) -> Result<(), BodyErr> {
        let (role, decl, _) = self.decl(dst)?;
        if role == Role::In {
            return Err(BodyErr::Fault(format!("aliasing in parameter {dst}")));
        }
        if !decl.del && !decl.eva {
            return Err(BodyErr::Fault(format!(
                "out parameter {dst} has neither delegation nor evaluation rights"
            )));
        }
        let d = match self.bind(dst)? {
            ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => it,
            _ => return Err(BodyErr::Fault(format!("parameter {dst} is not a scalar out"))),
        };
        let s = match self.bind(src)? {
            ArgBind::InItem(it) | ArgBind::InOut { input: it, .. } => it,
            ArgBind::Out(it) => it,
            _ => return Err(BodyErr::Fault(format!("parameter {src} is not aliasable"))),
        };
        self.effects += 1;
        if self.recording {
            self.rec.aliases.push((dst, TplArg::Param(src)));
        }
        self.pool
            .resolve_alias(d, s, self.task)
            .map_err(BodyErr::Fault)
    }

    pub fn alias_to_item(&mut self, dst: usize, src: ItemId) -> Result<(), BodyErr> {
        let d = match self.bind(dst)? {
            ArgBind::Out(it) | ArgBind::InOut { output: it, .. } => it,
            _ => return Err(BodyErr::Fault(format!("parameter {dst} is not a scalar out"))),
        };
        self.effects += 1;
        if self.recording {
            if let Some(i) = self.fresh.iter().position(|&f| f == src) {
                self.rec.aliases.push((dst, TplArg::Fresh(i)));
            } else {
                self.rec_ok = false;
            }
        }
        self.pool
            .resolve_alias(d, src, self.task)
            .map_err(BodyErr::Fault)
    }

    pub fn alias_to_elem(&mut self, dst: usize, p: usize, j: i64) -> Result<(), BodyErr> {
        let (arr, idx) = self.elem_coords(p, j)?;
        let it = self.pool.ensure_elem(arr, idx).map_err(BodyErr::Fault)?;
        let d = match self.bind(dst)? {
            ArgBind::Out(o) | ArgBind::InOut { output: o, .. } => o,
            _ => return Err(BodyErr::Fault(format!("parameter {dst} is not a scalar out"))),
        };
        self.effects += 1;
        if self.recording {
            match self.bind(p)? {
                ArgBind::InSlice { base, .. } | ArgBind::OutSlice { base, .. } => {
                    self.rec
                        .aliases
                        .push((dst, TplArg::ParamElem { param: p, rel: idx - base }));
                }
                _ => self.rec_ok = false,
            }
        }
        self.pool
            .resolve_alias(d, it, self.task)
            .map_err(BodyErr::Fault)
    }

    // -- construction -------------------------------------------------------------

    pub fn new_item(&mut self, name: &str) -> ItemId {
        let it = self.pool.new_item_raw(Some(name));
        self.fresh.push(it);
        it
    }

    pub fn new_array(&mut self, name: &str, lo: i64, hi: Option<i64>) -> ArrayId {
        self.rec_ok = false;
        let id = self.pool.arrays.len() as ArrayId;
        let mut a = ArrayDecl::new(name, lo, hi);
        let parent_label = self.pool.tasks[self.task as usize].label;
        let ord = {
            let t = &mut self.pool.tasks[self.task as usize];
            t.next_ordinal += 1;
            t.next_ordinal
        };
        a.anchor = Some(self.pool.arena.child(parent_label, ord));
        self.pool.arrays.push(a);
        id
    }

    pub fn set_array_budget(&mut self, arr: ArrayId, budget: u64) {
        self.pool.set_array_budget(arr, budget);
    }

    pub fn attach_rule(&mut self, arr: ArrayId, rule: Rule) {
        self.rec_ok = false;
        self.pool.attach_rule(arr, rule);
    }

    pub fn write_array_elem(&mut self, arr: ArrayId, idx: i64, v: Value) -> Result<(), BodyErr> {
        self.effects += 1;
        self.rec_ok = false;
        let it = self.pool.ensure_elem(arr, idx).map_err(BodyErr::Fault)?;
        self.pool
            .resolve_write(it, v, Some(self.task))
            .map_err(BodyErr::Fault)
    }

    pub fn release_element(&mut self, arr: ArrayId, idx: i64) -> Result<(), BodyErr> {
        self.effects += 1;
        self.rec_ok = false;
        self.pool.release_element(arr, idx).map_err(BodyErr::Fault)
    }

    // -- spawn builders -------------------------------------------------------------

    pub fn pass_in(&mut self, p: usize) -> Result<ArgBind, BodyErr> {
        match self.bind(p)? {
            ArgBind::InItem(it) => Ok(ArgBind::InItem(it)),
            ArgBind::InOut { input, .. } => Ok(ArgBind::InItem(input)),
            ArgBind::InSlice {
                array,
                base,
                lo,
                len,
            } => Ok(ArgBind::InSlice {
                array,
                base,
                lo,
                len,
            }),
            ArgBind::InStream { array, from } => Ok(ArgBind::InStream { array, from }),
            other => Err(BodyErr::Fault(format!("parameter {p} not passable: {other:?}"))),
        }
    }

    pub fn pass_out(&mut self, p: usize) -> Result<ArgBind, BodyErr> {
        let (_, decl, _) = self.decl(p)?;
        if !decl.del {
            return Err(BodyErr::Fault(format!(
                "out parameter {p} has no delegation right"
            )));
        }
        match self.bind(p)? {
            ArgBind::Out(it) => Ok(ArgBind::Out(it)),
            ArgBind::InOut { output, .. } => Ok(ArgBind::Out(output)),
            ArgBind::OutSlice {
                array,
                base,
                lo,
                len,
            } => Ok(ArgBind::OutSlice {
                array,
                base,
                lo,
                len,
            }),
            ArgBind::OutStream { array, from } => Ok(ArgBind::OutStream { array, from }),
            other => Err(BodyErr::Fault(format!("parameter {p} not delegable: {other:?}"))),
        }
    }

    /// Sub-slice of an array parameter: child sees indices child_lo..,
    /// mapped to this task's coordinates [from, to].
    pub fn sub_slice_in(
        &mut self,
        p: usize,
        from: i64,
        to: i64,
        child_lo: i64,
    ) -> Result<ArgBind, BodyErr> {
        let (arr, base_idx) = self.elem_coords(p, from)?;
        Ok(ArgBind::InSlice {
            array: arr,
            base: base_idx,
            lo: child_lo,
            len: Some(to - from + 1),
        })
    }

    pub fn sub_slice_out(
        &mut self,
        p: usize,
        from: i64,
        to: i64,
        child_lo: i64,
    ) -> Result<ArgBind, BodyErr> {
        let (arr, base_idx) = self.elem_coords(p, from)?;
        Ok(ArgBind::OutSlice {
            array: arr,
            base: base_idx,
            lo: child_lo,
            len: Some(to - from + 1),
        })
    }

    pub fn elem_in(&mut self, p: usize, j: i64) -> Result<ArgBind, BodyErr> {
        let (arr, idx) = self.elem_coords(p, j)?;
        Ok(ArgBind::InElem(arr, idx))
    }

    pub fn elem_out(&mut self, p: usize, j: i64) -> Result<ArgBind, BodyErr> {
        let (arr, idx) = self.elem_coords(p, j)?;
        Ok(ArgBind::OutElem(arr, idx))
    }

    pub fn stream_tail(&mut self, p: usize, advance: i64) -> Result<ArgBind, BodyErr> {
        match self.bind(p)? {
            ArgBind::InStream { array, from } => Ok(ArgBind::InStream {
                array,
                from: from + advance,
            }),
            _ => Err(BodyErr::Fault(format!("parameter {p} is not a stream"))),
        }
    }

    pub fn spawn(&mut self, instr: InstrId, args: Vec<BindSpec>) -> Result<(), BodyErr> {
        self.record_spawn(&SpawnTarget::Instr(instr), &args, None)?;
        self.spawns.push(SpawnRec {
            target: SpawnTarget::Instr(instr),
            args,
            promise: None,
        });
        Ok(())
    }

    pub fn spawn_promise(
        &mut self,
        instr: InstrId,
        args: Vec<BindSpec>,
        promise: f64,
    ) -> Result<(), BodyErr> {
        self.record_spawn(&SpawnTarget::Instr(instr), &args, Some(promise))?;
        self.spawns.push(SpawnRec {
            target: SpawnTarget::Instr(instr),
            args,
            promise: Some(promise),
        });
        Ok(())
    }

    pub fn spawn_slot(&mut self, cell: CellId, args: Vec<BindSpec>) -> Result<(), BodyErr> {
        self.rec_ok = false;
        self.spawns.push(SpawnRec {
            target: SpawnTarget::Slot(cell),
            args,
            promise: None,
        });
        Ok(())
    }

    pub fn spawn_by_name(&mut self, name: &str, args: Vec<BindSpec>) -> Result<(), BodyErr> {
        let id = self
            .pool
            .instr_id(name)
            .ok_or_else(|| BodyErr::Fault(format!("unknown instruction {name}")))?;
        self.spawn(id, args)
    }

    /// Capture the memo template form of a child spawn; marks the record
    /// unusable when an argument cannot be templated.
    fn record_spawn(
        &mut self,
        target: &SpawnTarget,
        args: &[BindSpec],
        promise: Option<f64>,
    ) -> Result<(), BodyErr> {
        if !self.recording || !self.rec_ok {
            return Ok(());
        }
        let SpawnTarget::Instr(instr) = target else {
            self.rec_ok = false;
            return Ok(());
        };
        let own = self.pool.tasks[self.task as usize].args.clone();
        let mut tpl_args = Vec::new();
        for spec in args {
            let t = match &spec.bind {
                ArgBind::InValue(v) => Some(TplArg::Lit(v.clone())),
                ArgBind::InItem(it) => self.tpl_of_item(*it, &own),
                ArgBind::Out(it) => self.tpl_of_item(*it, &own),
                ArgBind::InElem(arr, idx) => self.tpl_of_elem(*arr, *idx, &own, false),
                ArgBind::OutElem(arr, idx) => self.tpl_of_elem(*arr, *idx, &own, true),
                ArgBind::InSlice {
                    array, base, lo, len,
                }
                | ArgBind::OutSlice {
                    array, base, lo, len,
                } => self.tpl_of_slice(*array, *base, *lo, *len, &own),
                ArgBind::InStream { array, from } => self.tpl_of_stream(*array, *from, &own),
                ArgBind::InOut { input, output } => {
                    let i = self.fresh.iter().position(|&f| f == *input);
                    let o = self.fresh.iter().position(|&f| f == *output);
                    match (i, o) {
                        (Some(i), Some(o)) => Some(TplArg::FreshInOut { input: i, output: o }),
                        _ => None,
                    }
                }
                _ => None,
            };
            match t {
                Some(t) => tpl_args.push(crate::memo::TplBind {
                    arg: t,
                    default_candidate: spec.default_candidate,
                    indet: spec.indet,
                }),
                None => {
                    self.rec_ok = false;
                    return Ok(());
                }
            }
        }
        self.rec.spawns.push(TplSpawn {
            instr: *instr,
            args: tpl_args,
            promise,
        });
        Ok(())
    }

    fn tpl_of_item(&self, it: ItemId, own: &[BindSpec]) -> Option<TplArg> {
        if let Some(i) = self.fresh.iter().position(|&f| f == it) {
            return Some(TplArg::Fresh(i));
        }
        for (p, spec) in own.iter().enumerate() {
            match spec.bind {
                ArgBind::InItem(o) if o == it => return Some(TplArg::Param(p)),
                ArgBind::Out(o) if o == it => return Some(TplArg::Param(p)),
                ArgBind::InOut { input, .. } if input == it => return Some(TplArg::Param(p)),
                _ => {}
            }
        }
        // Evaluated external item with a stable value is key-determined.
        if let Some(v) = self.pool.value(it) {
            return Some(TplArg::Lit(v));
        }
        None
    }

    fn tpl_of_elem(&self, arr: ArrayId, idx: i64, own: &[BindSpec], _out: bool) -> Option<TplArg> {
        for (p, spec) in own.iter().enumerate() {
            match spec.bind {
                ArgBind::InSlice { array, base, .. } | ArgBind::OutSlice { array, base, .. }
                    if array == arr =>
                {
                    return Some(TplArg::ParamElem {
                        param: p,
                        rel: idx - base,
                    });
                }
                _ => {}
            }
        }
        None
    }

    fn tpl_of_slice(
        &self,
        arr: ArrayId,
        base: i64,
        lo: i64,
        len: Option<i64>,
        own: &[BindSpec],
    ) -> Option<TplArg> {
        for (p, spec) in own.iter().enumerate() {
            match spec.bind {
                ArgBind::InSlice {
                    array, base: pb, ..
                }
                | ArgBind::OutSlice {
                    array, base: pb, ..
                } if array == arr => {
                    return Some(TplArg::ParamSlice {
                        param: p,
                        rel_base: base - pb,
                        lo,
                        len,
                    });
                }
                _ => {}
            }
        }
        None
    }

    fn tpl_of_stream(&self, arr: ArrayId, from: i64, own: &[BindSpec]) -> Option<TplArg> {
        for (p, spec) in own.iter().enumerate() {
            if let ArgBind::InStream { array, from: pf } = spec.bind {
                if array == arr {
                    return Some(TplArg::ParamStream {
                        param: p,
                        rel: from - pf,
                    });
                }
            }
        }
        None
    }

    // -- curry / routines -------------------------------------------------------------

    pub fn register_curry(&mut self, target: InstrId, args: Vec<CurryArg>) -> InstrId {
        self.rec_ok = false;
        let name = format!(
            "{}~c{}",
            self.pool.registry[target as usize].proto.name,
            self.pool.derived_count
        );
        self.pool.derived_count += 1;
        let proto = self.pool.curry_proto(name, target, &args);
        self.pool.register(proto, InstrBody::Curry { target, args })
    }

    pub fn new_chain(&mut self, init: ItemId) -> ChainId {
        self.rec_ok = false;
        self.pool.new_chain(init)
    }

    pub fn chain_head(&self, ch: ChainId) -> ItemId {
        self.pool.chain_head(ch)
    }

    /// A routine as a value. Routines whose closure reads down cells pin
    /// the current copies at this use.
    pub fn routine_value(&mut self, instr: InstrId) -> Result<Value, BodyErr> {
        let cl = self.pool.closure(instr).map_err(BodyErr::Fault)?;
        if cl.down_cells.is_empty() {
            return Ok(Value::Routine(instr));
        }
        self.rec_ok = false;
        let mut pins = Vec::new();
        for c in cl.down_cells {
            let key = ctx_slot(&self.pool.tasks[self.task as usize].down_ctx, c);
            let key = if self.pool.tasks[self.task as usize]
                .scope_cells
                .contains(&c)
            {
                SlotKey::Scope(self.task)
            } else {
                key
            };
            let v = {
                let cell = &self.pool.cells[c as usize];
                cell.slot_index(key)
                    .and_then(|si| cell.slots[si].value.clone())
            };
            if let Some(v) = v {
                pins.push((c, v));
            }
        }
        let base = &self.pool.registry[instr as usize];
        let mut derived = base.clone();
        derived.proto.name = format!("{}~p{}", base.proto.name, self.pool.derived_count);
        self.pool.derived_count += 1;
        derived.down_pins = pins;
        let name = derived.proto.name.clone();
        let id = self.pool.registry.len() as InstrId;
        self.pool.registry.push(derived);
        self.pool.closures.push(None);
        self.pool.names.insert(name, id);
        Ok(Value::Routine(id))
    }

    // -- nonlocal cells -------------------------------------------------------------

    fn check_declared(&mut self, cell: CellId) -> Result<(), BodyErr> {
        let instr = self.instr();
        let cl = self.pool.closure(instr).map_err(BodyErr::Fault)?;
        let direct = self.pool.registry[instr as usize]
            .proto
            .nonlocals
            .iter()
            .any(|n| matches!(n, NonlocalRef::Cell(c, _) if *c == cell))
            || self.pool.registry[instr as usize]
                .proto
                .nonlocals
                .iter()
                .any(|n| matches!(n, NonlocalRef::ParamChannel(_)));
        let _ = cl;
        if !direct {
            let name = self.pool.cells[cell as usize].name.clone();
            return Err(BodyErr::Fault(format!(
                "touch of undeclared nonlocal {name}"
            )));
        }
        Ok(())
    }

    fn own_slot(&self, cell: CellId) -> SlotKey {
        if self.pool.tasks[self.task as usize].scope_cells.contains(&cell) {
            SlotKey::Scope(self.task)
        } else if self.pool.cells[cell as usize].kind == CellKind::Down {
            ctx_slot(&self.pool.tasks[self.task as usize].down_ctx, cell)
        } else {
            SlotKey::Root
        }
    }

    pub fn cell_read(&mut self, cell: CellId) -> Result<Value, BodyErr> {
        self.check_declared(cell)?;
        let key = self.own_slot(cell);
        let c = &self.pool.cells[cell as usize];
        let si = c
            .slot_index(key)
            .ok_or_else(|| BodyErr::Fault("cell slot missing".into()))?;
        c.slots[si]
            .value
            .clone()
            .ok_or_else(|| BodyErr::Fault(format!("{} has no value", c.name)))
    }

    pub fn cell_write(&mut self, cell: CellId, v: Value) -> Result<(), BodyErr> {
        self.check_declared(cell)?;
        self.effects += 1;
        self.rec_ok = false;
        let key = self.own_slot(cell);
        let name = self.pool.cells[cell as usize].name.clone();
        self.pool.cells[cell as usize].slot_mut(key).value = Some(v.clone());
        let label = self.pool.tasks[self.task as usize].label;
        let iname = self.pool.task_instr_name(self.task);
        self.pool.jrnl(
            EventKind::Evaluate,
            label,
            &iname,
            format!("nl:{name}={}", v.key_string()),
        );
        Ok(())
    }

    pub fn rebind_instr(&mut self, cell: CellId, instr: InstrId) -> Result<(), BodyErr> {
        if self.pool.cells[cell as usize].kind != CellKind::InstrSlot {
            return Err(BodyErr::Fault("rebinding a non-instruction cell".into()));
        }
        self.cell_write(cell, Value::Routine(instr))
    }

    pub fn channel_put(&mut self, cell: CellId, v: Value) -> Result<(), BodyErr> {
        if self.pool.cells[cell as usize].kind != CellKind::Channel {
            return Err(BodyErr::Fault("interaction with a non-channel cell".into()));
        }
        self.effects += 1;
        self.rec_ok = false;
        self.pool.cells[cell as usize].out_log.push(v);
        Ok(())
    }

    pub fn channel_get(&mut self, cell: CellId) -> Result<Option<Value>, BodyErr> {
        if self.pool.cells[cell as usize].kind != CellKind::Channel {
            return Err(BodyErr::Fault("interaction with a non-channel cell".into()));
        }
        self.effects += 1;
        self.rec_ok = false;
        Ok(self.pool.cells[cell as usize].input.pop_front())
    }

    pub fn channel_of_param(&mut self, p: usize) -> Result<CellId, BodyErr> {
        let v = self.read(p)?;
        let h = v
            .as_int()
            .ok_or_else(|| BodyErr::Fault("channel handle must be an int".into()))?;
        if h < 0 || h as usize >= self.pool.cells.len() {
            return Err(BodyErr::Fault("channel handle out of range".into()));
        }
        Ok(h as CellId)
    }

    pub fn value_of(&self, it: ItemId) -> Option<Value> {
        self.pool.value(it)
    }
}

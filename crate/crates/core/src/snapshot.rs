//! Pool state capture at a step boundary, and rebuilding a pool from a
//! capture.
//!
//! A snapshot is line-oriented UTF-8 in the same tab-separated field
//! discipline as the journal: the full item table plus the live task list,
//! together with the label arena, arrays, cells, chains, and the derived
//! instructions created since registration. Resuming parses the text
//! against a fresh pool that carries the same instruction registrations and
//! cell declarations; the run then continues to the same final values.
//!
//! Only programs whose live tasks are pure can be captured: interaction
//! channels and cell slots reachable from a live task are live state the
//! text form does not carry. Snapshotting such a pool is refused with an
//! explanation rather than silently dropping effects.

use std::fmt::Write as _;

use crate::arrays::{ArrayDecl, ArrayId, OriginRange, Rule, RuleArg};
use crate::error::{Result, RunError};
use crate::instr::{CellId, CurryArg, InstrBody};
use crate::item::{Item, ItemId, ItemState, OriginEntry, TaskId};
use crate::label::SeqLabel;
use crate::nonlocal::CellKind;
use crate::pool::{Pool, UNDEMANDED};
use crate::sched::{Drive, Order, Policy, PromiseMode};
use crate::task::{ArgBind, BindSpec, OutStatus, Task, TaskState};
use crate::value::{InstrId, Value};

pub const FORMAT_VERSION: u32 = 1;
const HEADER_TAG: &str = "tsia-snapshot";

// ---- field escaping -------------------------------------------------------------

/// Names may contain arbitrary text; tabs, newlines and the escape
/// character itself are percent-encoded so every record stays one line.
fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0a"),
            '\r' => out.push_str("%0d"),
            c => out.push(c),
        }
    }
    out
}

fn unesc(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c == '%' {
            let h = it.next()?;
            let l = it.next()?;
            let mut hex = String::new();
            hex.push(h);
            hex.push(l);
            let v = u8::from_str_radix(&hex, 16).ok()?;
            out.push(v as char);
        } else {
            out.push(c);
        }
    }
    Some(out)
}

// ---- value text form -------------------------------------------------------------

/// Parses the stable key form produced by `Value::key_string`. The form is
/// prefix-coded (i/r/b/x/[/fn), so values nest inside lists without
/// quoting.
pub fn parse_value(s: &str) -> Option<Value> {
    let (v, rest) = parse_value_prefix(s)?;
    if rest.is_empty() {
        Some(v)
    } else {
        None
    }
}

fn parse_value_prefix(s: &str) -> Option<(Value, &str)> {
    let b = s.as_bytes();
    match b.first()? {
        b'i' => {
            let mut end = 1;
            if b.get(1) == Some(&b'-') {
                end = 2;
            }
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
            let v: i64 = s[1..end].parse().ok()?;
            Some((Value::Int(v), &s[end..]))
        }
        b'r' => {
            if b.len() < 17 {
                return None;
            }
            let bits = u64::from_str_radix(&s[1..17], 16).ok()?;
            Some((Value::Real(f64::from_bits(bits)), &s[17..]))
        }
        b'b' => {
            if let Some(rest) = s.strip_prefix("btrue") {
                Some((Value::Bool(true), rest))
            } else {
                s.strip_prefix("bfalse").map(|rest| (Value::Bool(false), rest))
            }
        }
        b'x' => {
            let mut end = 1;
            while end < b.len() && b[end].is_ascii_hexdigit() {
                end += 1;
            }
            if (end - 1) % 2 != 0 {
                return None;
            }
            let mut bytes = Vec::with_capacity((end - 1) / 2);
            let mut i = 1;
            while i < end {
                bytes.push(u8::from_str_radix(&s[i..i + 2], 16).ok()?);
                i += 2;
            }
            Some((Value::Bytes(bytes), &s[end..]))
        }
        b'[' => {
            let mut rest = &s[1..];
            let mut items = Vec::new();
            if let Some(r) = rest.strip_prefix(']') {
                return Some((Value::List(items), r));
            }
            loop {
                let (v, r) = parse_value_prefix(rest)?;
                items.push(v);
                rest = r;
                if let Some(r) = rest.strip_prefix(',') {
                    rest = r;
                } else if let Some(r) = rest.strip_prefix(']') {
                    return Some((Value::List(items), r));
                } else {
                    return None;
                }
            }
        }
        b'f' => {
            let rest = s.strip_prefix("fn")?;
            let b = rest.as_bytes();
            let mut end = 0;
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
            if end == 0 {
                return None;
            }
            let v: u32 = rest[..end].parse().ok()?;
            Some((Value::Routine(v), &rest[end..]))
        }
        _ => None,
    }
}

/// Every routine reference inside a value must name a registered
/// instruction, or later spawns through the value would index out of the
/// table.
fn routine_ids_ok(v: &Value, n_instrs: usize) -> bool {
    match v {
        Value::Routine(r) => (*r as usize) < n_instrs,
        Value::List(l) => l.iter().all(|x| routine_ids_ok(x, n_instrs)),
        _ => true,
    }
}

fn ck_routines(line: usize, v: Value, n_instrs: usize) -> Result<Value> {
    if routine_ids_ok(&v, n_instrs) {
        Ok(v)
    } else {
        Err(derr(line, "routine value names an unregistered instruction"))
    }
}

// ---- serialization -------------------------------------------------------------

fn opt_i64(v: Option<i64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "n".into(),
    }
}

fn opt_f64_bits(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:016x}", x.to_bits()),
        None => "n".into(),
    }
}

fn opt_value(v: &Option<Value>) -> String {
    match v {
        Some(x) => x.key_string(),
        None => "n".into(),
    }
}

fn bool01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn kind_code(k: CellKind) -> &'static str {
    match k {
        CellKind::Updown => "u",
        CellKind::Down => "d",
        CellKind::Static => "s",
        CellKind::Channel => "c",
        CellKind::InstrSlot => "i",
    }
}

fn out_status_char(s: OutStatus) -> char {
    match s {
        OutStatus::Pending => 'P',
        OutStatus::Wrote => 'W',
        OutStatus::Aliased => 'A',
        OutStatus::Delegated => 'D',
        OutStatus::Ignored => 'I',
    }
}

fn bind_fields(b: &ArgBind) -> Option<String> {
    let s = match b {
        ArgBind::InItem(it) => format!("ii\t{it}"),
        ArgBind::InValue(v) => format!("iv\t{}", v.key_string()),
        ArgBind::InElem(a, j) => format!("ie\t{a}\t{j}"),
        ArgBind::InSlice {
            array,
            base,
            lo,
            len,
        } => format!("isl\t{array}\t{base}\t{lo}\t{}", opt_i64(*len)),
        ArgBind::InStream { array, from } => format!("ist\t{array}\t{from}"),
        ArgBind::InOut { input, output } => format!("io\t{input}\t{output}"),
        ArgBind::Out(it) => format!("o\t{it}"),
        ArgBind::OutElem(a, j) => format!("oe\t{a}\t{j}"),
        ArgBind::OutSlice {
            array,
            base,
            lo,
            len,
        } => format!("osl\t{array}\t{base}\t{lo}\t{}", opt_i64(*len)),
        ArgBind::OutStream { array, from } => format!("ost\t{array}\t{from}"),
        // Cell and slot bindings carry live nonlocal state; the refusal
        // scan rejects tasks holding them before serialization starts.
        ArgBind::CellIn(_) | ArgBind::CellOut(_) | ArgBind::SlotIn(..) | ArgBind::SlotOut(..) => {
            return None
        }
    };
    Some(s)
}

fn policy_row(p: &Policy) -> String {
    let (order, workers) = match p.order {
        Order::Lifo => ("lifo", 1),
        Order::Fifo => ("fifo", 1),
        Order::WorkStealing { workers } => ("steal", workers.max(1)),
    };
    let drive = match p.drive {
        Drive::Supply => "supply",
        Drive::Demand => "demand",
    };
    let promise = match p.promise {
        PromiseMode::Off => "off",
        PromiseMode::Heuristic => "heuristic",
        PromiseMode::Strict => "strict",
    };
    format!(
        "policy\t{order}\t{workers}\t{drive}\t{}\t{promise}\t{}\t{}",
        match p.spec_limit {
            Some(l) => l.to_string(),
            None => "n".into(),
        },
        p.maxunrl,
        p.seed
    )
}

/// Serializes the pool at a step boundary. Fails with `SnapshotRefused`
/// when any live task could touch state the text form does not carry:
/// impure instructions, instruction-slot targets, routine-valued spawners
/// with unknowable callees, or cell arguments.
pub fn snapshot(pool: &mut Pool) -> Result<String> {
    if let Some(f) = &pool.failed {
        return Err(RunError::SnapshotRefused {
            reason: format!("pool holds a failed task: {f}"),
        });
    }
    // Refusal scan over live tasks.
    let live: Vec<TaskId> = pool
        .tasks
        .iter()
        .filter(|t| matches!(t.state, TaskState::Pending | TaskState::Running))
        .map(|t| t.id)
        .collect();
    for id in live {
        let t = &pool.tasks[id as usize];
        let label = pool.arena.display(t.label);
        if t.state == TaskState::Running {
            return Err(RunError::SnapshotRefused {
                reason: format!("task {label} is mid-execution; capture only between steps"),
            });
        }
        if t.slot.is_some() {
            return Err(RunError::SnapshotRefused {
                reason: format!(
                    "task {label} targets an instruction slot; slot state is not serialized"
                ),
            });
        }
        let instr = t.instr;
        let has_cell_arg = t.args.iter().any(|a| {
            matches!(
                a.bind,
                ArgBind::CellIn(_) | ArgBind::CellOut(_) | ArgBind::SlotIn(..) | ArgBind::SlotOut(..)
            )
        });
        let fenced = !t.fence_cells.is_empty();
        let name = pool.instr_name(instr).to_string();
        let cl = pool
            .closure(instr)
            .map_err(|e| RunError::SnapshotRefused { reason: e })?;
        if !cl.pure || has_cell_arg || fenced {
            return Err(RunError::SnapshotRefused {
                reason: format!(
                    "live task {label} ({name}) touches nonlocal state; \
                     interaction channels and cells are not serialized"
                ),
            });
        }
        if pool.instruction(instr).proto.dynamic_calls {
            return Err(RunError::SnapshotRefused {
                reason: format!(
                    "live task {label} ({name}) may spawn routine values; \
                     its callee set is unknowable at capture time"
                ),
            });
        }
    }
    // Derived instructions must name a rebuildable base.
    for id in 0..pool.registry.len() {
        let ins = &pool.registry[id];
        if ins.down_pins.is_empty() || matches!(ins.body, InstrBody::Curry { .. }) {
            continue;
        }
        let name = &ins.proto.name;
        let base_ok = name
            .rfind("~p")
            .map(|cut| pool.names.contains_key(&name[..cut]))
            .unwrap_or(false);
        if !base_ok {
            return Err(RunError::SnapshotRefused {
                reason: format!("derived instruction {name} has no rebuildable base"),
            });
        }
    }

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "{HEADER_TAG}\t{FORMAT_VERSION}");
    let _ = writeln!(w, "{}", policy_row(pool.policy()));
    let _ = writeln!(
        w,
        "counts\t{}\t{}\t{}\t{}",
        pool.tasks.len(),
        pool.spawn_counter,
        pool.root_ordinal,
        pool.derived_count
    );

    // Instruction table: static rows audit names; derived rows carry a
    // rebuild recipe.
    for id in 0..pool.registry.len() {
        let ins = &pool.registry[id];
        let name = esc(&ins.proto.name);
        match &ins.body {
            InstrBody::Curry { target, args } => {
                let _ = writeln!(w, "curry\t{id}\t{name}\t{target}\t{}", args.len());
                for (pos, a) in args.iter().enumerate() {
                    let f = match a {
                        CurryArg::Param(p) => format!("p\t{p}"),
                        CurryArg::Lit(v) => format!("l\t{}", v.key_string()),
                        CurryArg::Item(it) => format!("it\t{it}"),
                        CurryArg::Chain(c) => format!("ch\t{c}"),
                        CurryArg::ChainNext(c) => format!("cn\t{c}"),
                    };
                    let _ = writeln!(w, "carg\t{id}\t{pos}\t{f}");
                }
            }
            _ if !ins.down_pins.is_empty() => {
                let cut = ins.proto.name.rfind("~p").expect("checked above");
                let base = pool.names[&ins.proto.name[..cut]];
                let _ = writeln!(w, "deriv\t{id}\t{name}\t{base}\t{}", ins.down_pins.len());
                for (pos, (c, v)) in ins.down_pins.iter().enumerate() {
                    let _ = writeln!(w, "dpin\t{id}\t{pos}\t{c}\t{}", v.key_string());
                }
            }
            _ => {
                let _ = writeln!(w, "instr\t{id}\t{name}");
            }
        }
    }

    // Label arena: nodes appended in creation order, parent always first.
    for id in 1..pool.arena.len() {
        let l = SeqLabel(id as u32);
        let parent = pool.arena.parent(l).expect("non-root has parent").0;
        let _ = writeln!(w, "label\t{id}\t{parent}\t{}", pool.arena.ordinal(l));
    }

    // Item table.
    for (id, it) in pool.items.iter().enumerate() {
        let (st, payload) = match &it.state {
            ItemState::Unresolved => ("U", "-".to_string()),
            ItemState::Evaluated(v) => ("E", v.key_string()),
            ItemState::Aliased(t) => ("A", t.to_string()),
            ItemState::Released => ("R", "-".to_string()),
            ItemState::Cancelled => ("C", "-".to_string()),
        };
        let mut flags = String::new();
        if it.pinned {
            flags.push('p');
        }
        if it.indet {
            flags.push('i');
        }
        if it.multi_origin {
            flags.push('m');
        }
        if it.rule_produced {
            flags.push('r');
        }
        if flags.is_empty() {
            flags.push('-');
        }
        let (ea, ei) = match it.elem_of {
            Some((a, j)) => (a.to_string(), j.to_string()),
            None => ("n".into(), "n".into()),
        };
        let name = match &it.name {
            Some(n) => format!("n:{}", esc(n)),
            None => "-".into(),
        };
        let _ = writeln!(
            w,
            "item\t{id}\t{st}\t{payload}\t{flags}\t{}\t{}\t{ea}\t{ei}\t{name}",
            it.demand_depth, it.pending_consumers
        );
        for o in &it.origins {
            let _ = writeln!(w, "orig\t{id}\t{}\t{}", o.task, bool01(o.default_candidate));
        }
        for t in &it.waiters {
            let _ = writeln!(w, "wait\t{id}\t{t}");
        }
    }

    // Arrays with their elements, rules, and origin ranges.
    for (id, a) in pool.arrays.iter().enumerate() {
        let anchor = match a.anchor {
            Some(l) => l.0.to_string(),
            None => "n".into(),
        };
        let _ = writeln!(
            w,
            "array\t{id}\t{}\t{}\t{}\t{anchor}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            esc(&a.name),
            a.lo,
            opt_i64(a.hi),
            a.anchor_ordinal,
            a.supplied_to,
            a.budget,
            a.materialized,
            a.live_evaluated,
            a.peak_live,
            a.evaluated_total
        );
        for (&j, &it) in &a.elems {
            let _ = writeln!(w, "elem\t{id}\t{j}\t{it}");
        }
        for (ri, r) in a.rules.iter().enumerate() {
            let _ = writeln!(
                w,
                "rule\t{id}\t{}\t{}\t{}\t{}",
                r.instr,
                r.lo,
                opt_i64(r.hi),
                r.ins.len()
            );
            for (pos, ra) in r.ins.iter().enumerate() {
                let f = match ra {
                    RuleArg::Elem { offset } => format!("e\t{offset}"),
                    RuleArg::OtherElem { array, offset } => format!("oe\t{array}\t{offset}"),
                    RuleArg::SelfIndex => "ix".to_string(),
                    RuleArg::Lit(v) => format!("l\t{}", v.key_string()),
                };
                let _ = writeln!(w, "rarg\t{id}\t{ri}\t{pos}\t{f}");
            }
        }
        for r in &a.origin_ranges {
            let _ = writeln!(
                w,
                "range\t{id}\t{}\t{}\t{}\t{}",
                r.lo,
                r.hi,
                r.task,
                bool01(r.default_candidate)
            );
        }
        for &(lo, hi) in &a.indet_ranges {
            let _ = writeln!(w, "irange\t{id}\t{lo}\t{hi}");
        }
    }

    // Cells: declared set is audited on resume; only root-slot values and
    // channel logs are state. Scope slots belong to finished scopes and
    // are unreachable from pure live tasks.
    for (id, c) in pool.cells.iter().enumerate() {
        let root = c
            .slots
            .iter()
            .find(|s| s.key == crate::nonlocal::SlotKey::Root)
            .and_then(|s| s.value.clone());
        let _ = writeln!(
            w,
            "cell\t{id}\t{}\t{}\t{}",
            esc(&c.name),
            kind_code(c.kind),
            opt_value(&root)
        );
        for v in &c.out_log {
            let _ = writeln!(w, "chout\t{id}\t{}", v.key_string());
        }
        for v in &c.input {
            let _ = writeln!(w, "chin\t{id}\t{}", v.key_string());
        }
    }

    for (id, head) in pool.chains.iter().enumerate() {
        let _ = writeln!(w, "chain\t{id}\t{head}");
    }

    // Live task list. Finished and cancelled ids are re-created as blank
    // placeholders on resume so task ids stay dense.
    for t in pool.tasks.iter().filter(|t| t.state == TaskState::Pending) {
        let outs: String = if t.out_status.is_empty() {
            "-".into()
        } else {
            t.out_status.iter().map(|&s| out_status_char(s)).collect()
        };
        let _ = writeln!(
            w,
            "task\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{outs}\t{}",
            t.id,
            t.instr,
            t.label.0,
            t.spawn_seq,
            t.strict_pending,
            t.next_ordinal,
            bool01(t.demanded),
            t.spec_depth,
            opt_f64_bits(t.promise),
            t.inline_runs,
            t.home_worker,
            t.args.len()
        );
        for (pos, a) in t.args.iter().enumerate() {
            let Some(f) = bind_fields(&a.bind) else {
                return Err(RunError::SnapshotRefused {
                    reason: "cell-bound argument survived the refusal scan".into(),
                });
            };
            let _ = writeln!(
                w,
                "targ\t{}\t{pos}\t{}\t{}\t{f}",
                t.id,
                bool01(a.default_candidate),
                bool01(a.indet)
            );
        }
    }
    let _ = writeln!(w, "end");
    Ok(out)
}

// ---- parsing -------------------------------------------------------------

fn derr(line: usize, msg: impl std::fmt::Display) -> RunError {
    RunError::Decode(format!("line {line}: {msg}"))
}

struct Row<'a> {
    line: usize,
    tag: &'a str,
    fields: Vec<&'a str>,
}

struct Reader<'a> {
    rows: Vec<Row<'a>>,
    i: usize,
}

impl<'a> Reader<'a> {
    fn parse(text: &'a str) -> Result<Reader<'a>> {
        let mut rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            if raw.is_empty() {
                continue;
            }
            let mut fields: Vec<&str> = raw.split('\t').collect();
            let tag = fields.remove(0);
            rows.push(Row { line, tag, fields });
        }
        if rows.is_empty() {
            return Err(derr(1, "empty snapshot"));
        }
        Ok(Reader { rows, i: 0 })
    }

    fn peek_tag(&self) -> Option<&'a str> {
        self.rows.get(self.i).map(|r| r.tag)
    }

    fn next(&mut self) -> Option<&Row<'a>> {
        if self.i < self.rows.len() {
            self.i += 1;
            Some(&self.rows[self.i - 1])
        } else {
            None
        }
    }

    /// Takes the next row, requiring `tag`.
    fn expect(&mut self, tag: &str) -> Result<&Row<'a>> {
        if self.i >= self.rows.len() {
            let at = self.rows.last().map(|r| r.line + 1).unwrap_or(1);
            return Err(derr(at, format!("expected {tag} row, found end")));
        }
        if self.rows[self.i].tag != tag {
            let r = &self.rows[self.i];
            return Err(derr(r.line, format!("expected {tag} row, found {}", r.tag)));
        }
        self.i += 1;
        Ok(&self.rows[self.i - 1])
    }
}

impl<'a> Row<'a> {
    fn field(&self, idx: usize) -> Result<&'a str> {
        self.fields
            .get(idx)
            .copied()
            .ok_or_else(|| derr(self.line, format!("{} row needs field {idx}", self.tag)))
    }

    fn num<T: std::str::FromStr>(&self, idx: usize) -> Result<T> {
        let f = self.field(idx)?;
        f.parse().map_err(|_| {
            derr(
                self.line,
                format!("{} row field {idx}: bad number {f:?}", self.tag),
            )
        })
    }

    fn opt_num<T: std::str::FromStr>(&self, idx: usize) -> Result<Option<T>> {
        let f = self.field(idx)?;
        if f == "n" {
            return Ok(None);
        }
        f.parse().map(Some).map_err(|_| {
            derr(
                self.line,
                format!("{} row field {idx}: bad number {f:?}", self.tag),
            )
        })
    }

    fn flag(&self, idx: usize) -> Result<bool> {
        match self.field(idx)? {
            "0" => Ok(false),
            "1" => Ok(true),
            f => Err(derr(self.line, format!("bad flag {f:?}"))),
        }
    }

    fn value(&self, idx: usize) -> Result<Value> {
        let f = self.field(idx)?;
        parse_value(f).ok_or_else(|| derr(self.line, format!("bad value literal {f:?}")))
    }

    fn opt_value(&self, idx: usize) -> Result<Option<Value>> {
        let f = self.field(idx)?;
        if f == "n" {
            return Ok(None);
        }
        self.value(idx).map(Some)
    }

    fn name(&self, idx: usize) -> Result<String> {
        let f = self.field(idx)?;
        unesc(f).ok_or_else(|| derr(self.line, format!("bad escaped name {f:?}")))
    }
}

/// Reads the policy recorded in a snapshot without rebuilding the pool,
/// so a runner can default to the captured configuration.
pub fn recorded_policy(text: &str) -> Option<Policy> {
    for raw in text.lines() {
        let f: Vec<&str> = raw.split('\t').collect();
        if f[0] != "policy" || f.len() < 8 {
            continue;
        }
        let workers: u32 = f[2].parse().ok()?;
        let order = match f[1] {
            "lifo" => Order::Lifo,
            "fifo" => Order::Fifo,
            "steal" => Order::WorkStealing { workers },
            _ => return None,
        };
        let drive = match f[3] {
            "supply" => Drive::Supply,
            "demand" => Drive::Demand,
            _ => return None,
        };
        let spec_limit = if f[4] == "n" {
            None
        } else {
            Some(f[4].parse().ok()?)
        };
        let promise = match f[5] {
            "off" => PromiseMode::Off,
            "heuristic" => PromiseMode::Heuristic,
            "strict" => PromiseMode::Strict,
            _ => return None,
        };
        return Some(Policy {
            order,
            drive,
            spec_limit,
            promise,
            maxunrl: f[6].parse().ok()?,
            seed: f[7].parse().ok()?,
            script: None,
        });
    }
    None
}

/// Extracts a scheduling script from a rendered journal: the label of
/// every task the scheduler selected, in order. Replaying it against the
/// same program forces the identical task sequence. Journals recorded with
/// inline unrolling repeat a label per unrolled run; record with
/// maxunrl=1 for replay.
pub fn script_from_journal(journal: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in journal.lines() {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() >= 3 && (f[1] == "Exec" || f[1] == "MemoHit") {
            out.push(f[2].to_string());
        }
    }
    out
}

fn blank_task(id: TaskId) -> Task {
    Task {
        id,
        instr: 0,
        slot: None,
        label: crate::label::ROOT_LABEL,
        spawn_seq: 0,
        state: TaskState::Done,
        args: Vec::new(),
        out_status: Vec::new(),
        strict_pending: 0,
        fence_cells: Vec::new(),
        down_ctx: Vec::new(),
        next_ordinal: 1,
        demanded: false,
        spec_depth: UNDEMANDED,
        promise: None,
        enqueued: false,
        home_worker: 0,
        inline_runs: 0,
        scope_cells: Vec::new(),
        reads: Vec::new(),
    }
}

/// Rebuilds a captured pool against `pool`, which must be unstarted and
/// carry the same instruction registrations and cell declarations as the
/// captured run. The scheduling policy stays the caller's; use
/// `recorded_policy` to reproduce the captured one. Journal, statistics,
/// and memo contents start fresh.
pub fn resume(text: &str, mut pool: Pool) -> Result<Pool> {
    if !pool.items.is_empty()
        || !pool.tasks.is_empty()
        || !pool.arrays.is_empty()
        || !pool.chains.is_empty()
        || pool.arena.len() != 1
    {
        return Err(RunError::Config(
            "resume needs an unstarted pool carrying only registrations and declarations".into(),
        ));
    }
    let mut r = Reader::parse(text)?;

    let h = r.expect(HEADER_TAG)?;
    let version: u32 = h.num(0)?;
    if version != FORMAT_VERSION {
        return Err(derr(h.line, format!("unsupported snapshot version {version}")));
    }
    let _ = r.expect("policy")?;
    let c = r.expect("counts")?;
    let n_tasks: usize = c.num(0)?;
    let spawn_counter: u64 = c.num(1)?;
    let root_ordinal: u32 = c.num(2)?;
    let derived_count: u32 = c.num(3)?;

    // Instruction table: audit the static prefix, rebuild the derived tail.
    let mut next_id = 0u32;
    while let Some(tag) = r.peek_tag() {
        if !matches!(tag, "instr" | "curry" | "deriv") {
            break;
        }
        let (line, id, name, aux, count) = {
            let row = r.next().expect("peeked");
            let id: u32 = row.num(0)?;
            let name = row.name(1)?;
            let (aux, count) = if matches!(row.tag, "curry" | "deriv") {
                (row.num::<u32>(2)?, row.num::<usize>(3)?)
            } else {
                (0, 0)
            };
            (row.line, id, name, aux, count)
        };
        if id != next_id {
            return Err(derr(line, format!("instruction rows must be dense at {next_id}")));
        }
        next_id += 1;
        let have = pool.registry.len() as u32;
        if id < have {
            let existing = &pool.registry[id as usize].proto.name;
            if *existing != name {
                return Err(RunError::Config(format!(
                    "instruction table mismatch at {id}: snapshot has {name}, pool has {existing}"
                )));
            }
            // Consume any recipe sub-rows; the registration wins.
            while matches!(r.peek_tag(), Some("carg") | Some("dpin")) {
                r.next();
            }
            continue;
        }
        if id > have {
            return Err(RunError::Config(format!(
                "instruction {name} ({id}) arrives before the pool registered {have} instructions"
            )));
        }
        match tag {
            "curry" => {
                let target: InstrId = aux;
                if target >= have {
                    return Err(derr(line, format!("curry target {target} out of range")));
                }
                let mut args = Vec::with_capacity(count);
                for pos in 0..count {
                    let a = r.expect("carg")?;
                    let aid: u32 = a.num(0)?;
                    let apos: usize = a.num(1)?;
                    if aid != id || apos != pos {
                        return Err(derr(a.line, "carg row out of order"));
                    }
                    let arg = match a.field(2)? {
                        "p" => CurryArg::Param(a.num(3)?),
                        "l" => CurryArg::Lit(ck_routines(a.line, a.value(3)?, have as usize)?),
                        "it" => CurryArg::Item(a.num(3)?),
                        "ch" => CurryArg::Chain(a.num(3)?),
                        "cn" => CurryArg::ChainNext(a.num(3)?),
                        f => return Err(derr(a.line, format!("bad curry arg kind {f:?}"))),
                    };
                    args.push(arg);
                }
                let proto = pool.curry_proto(name, target, &args);
                let got = pool.register(proto, InstrBody::Curry { target, args });
                debug_assert_eq!(got, id);
            }
            "deriv" => {
                let base: InstrId = aux;
                if base >= have {
                    return Err(derr(line, format!("derived base {base} out of range")));
                }
                let mut pins: Vec<(CellId, Value)> = Vec::with_capacity(count);
                for pos in 0..count {
                    let p = r.expect("dpin")?;
                    let pid: u32 = p.num(0)?;
                    let ppos: usize = p.num(1)?;
                    if pid != id || ppos != pos {
                        return Err(derr(p.line, "dpin row out of order"));
                    }
                    let v = ck_routines(p.line, p.value(3)?, have as usize)?;
                    pins.push((p.num(2)?, v));
                }
                let mut ins = pool.registry[base as usize].clone();
                ins.proto.name = name.clone();
                ins.down_pins = pins;
                pool.registry.push(ins);
                pool.closures.push(None);
                pool.names.insert(name, id);
            }
            "instr" => {
                return Err(RunError::Config(format!(
                    "instruction {name} is not registered in the target pool"
                )));
            }
            _ => unreachable!(),
        }
    }
    let n_instrs = pool.registry.len();
    if (next_id as usize) < n_instrs {
        return Err(RunError::Config(format!(
            "pool registers {n_instrs} instructions but the snapshot lists {next_id}"
        )));
    }

    // Label arena.
    while r.peek_tag() == Some("label") {
        let row = r.next().expect("peeked");
        let id: u32 = row.num(0)?;
        let parent: u32 = row.num(1)?;
        let ordinal: u32 = row.num(2)?;
        if id as usize != pool.arena.len() || parent >= id {
            return Err(derr(row.line, "label rows must be dense, parents first"));
        }
        let got = pool.arena.child(SeqLabel(parent), ordinal);
        debug_assert_eq!(got.0, id);
    }
    let n_labels = pool.arena.len() as u32;

    // Items with origins and waiters.
    let mut items: Vec<Item> = Vec::new();
    loop {
        match r.peek_tag() {
            Some("item") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id != items.len() {
                    return Err(derr(row.line, "item rows must be dense"));
                }
                let mut it = Item::fresh();
                it.state = match row.field(1)? {
                    "U" => ItemState::Unresolved,
                    "E" => ItemState::Evaluated(ck_routines(row.line, row.value(2)?, n_instrs)?),
                    "A" => ItemState::Aliased(row.num(2)?),
                    "R" => ItemState::Released,
                    "C" => ItemState::Cancelled,
                    f => return Err(derr(row.line, format!("bad item state {f:?}"))),
                };
                for ch in row.field(3)?.chars() {
                    match ch {
                        'p' => it.pinned = true,
                        'i' => it.indet = true,
                        'm' => it.multi_origin = true,
                        'r' => it.rule_produced = true,
                        '-' => {}
                        _ => return Err(derr(row.line, format!("bad item flag {ch:?}"))),
                    }
                }
                it.demand_depth = row.num(4)?;
                it.pending_consumers = row.num(5)?;
                let ea: Option<u32> = row.opt_num(6)?;
                let ei: Option<i64> = row.opt_num(7)?;
                it.elem_of = match (ea, ei) {
                    (Some(a), Some(j)) => Some((a, j)),
                    (None, None) => None,
                    _ => return Err(derr(row.line, "element coordinates must pair")),
                };
                let nf = row.field(8)?;
                it.name = match nf {
                    "-" => None,
                    s => {
                        let s = s
                            .strip_prefix("n:")
                            .ok_or_else(|| derr(row.line, "bad item name field"))?;
                        Some(
                            unesc(s)
                                .ok_or_else(|| derr(row.line, "bad item name escape"))?
                                .into(),
                        )
                    }
                };
                items.push(it);
            }
            Some("orig") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id >= items.len() {
                    return Err(derr(row.line, "orig row before its item"));
                }
                let entry = OriginEntry {
                    task: row.num(1)?,
                    default_candidate: row.flag(2)?,
                };
                items[id].origins.push(entry);
            }
            Some("wait") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id >= items.len() {
                    return Err(derr(row.line, "wait row before its item"));
                }
                let t: TaskId = row.num(1)?;
                items[id].waiters.push(t);
            }
            _ => break,
        }
    }
    let n_items = items.len() as u32;

    // Arrays.
    let mut arrays: Vec<ArrayDecl> = Vec::new();
    loop {
        match r.peek_tag() {
            Some("array") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id != arrays.len() {
                    return Err(derr(row.line, "array rows must be dense"));
                }
                let mut a = ArrayDecl::new(row.name(1)?, row.num(2)?, row.opt_num(3)?);
                let anchor: Option<u32> = row.opt_num(4)?;
                if let Some(l) = anchor {
                    if l >= n_labels {
                        return Err(derr(row.line, "array anchor label out of range"));
                    }
                }
                a.anchor = anchor.map(SeqLabel);
                a.anchor_ordinal = row.num(5)?;
                a.supplied_to = row.num(6)?;
                a.budget = row.num(7)?;
                a.materialized = row.num(8)?;
                a.live_evaluated = row.num(9)?;
                a.peak_live = row.num(10)?;
                a.evaluated_total = row.num(11)?;
                arrays.push(a);
            }
            Some("elem") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                let j: i64 = row.num(1)?;
                let it: ItemId = row.num(2)?;
                if id >= arrays.len() || it >= n_items {
                    return Err(derr(row.line, "elem row out of range"));
                }
                arrays[id].elems.insert(j, it);
            }
            Some("rule") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                let instr: InstrId = row.num(1)?;
                if id >= arrays.len() || instr as usize >= n_instrs {
                    return Err(derr(row.line, "rule row out of range"));
                }
                let lo: i64 = row.num(2)?;
                let hi: Option<i64> = row.opt_num(3)?;
                let nins: usize = row.num(4)?;
                let ridx = arrays[id].rules.len();
                let mut ins = Vec::with_capacity(nins);
                for pos in 0..nins {
                    let a = r.expect("rarg")?;
                    let aid: usize = a.num(0)?;
                    let ari: usize = a.num(1)?;
                    let apos: usize = a.num(2)?;
                    if aid != id || ari != ridx || apos != pos {
                        return Err(derr(a.line, "rarg row out of order"));
                    }
                    let form = match a.field(3)? {
                        "e" => RuleArg::Elem { offset: a.num(4)? },
                        "oe" => RuleArg::OtherElem {
                            array: a.num(4)?,
                            offset: a.num(5)?,
                        },
                        "ix" => RuleArg::SelfIndex,
                        "l" => RuleArg::Lit(ck_routines(a.line, a.value(4)?, n_instrs)?),
                        f => return Err(derr(a.line, format!("bad rule arg kind {f:?}"))),
                    };
                    ins.push(form);
                }
                arrays[id].rules.push(Rule { instr, ins, lo, hi });
            }
            Some("range") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id >= arrays.len() {
                    return Err(derr(row.line, "range row out of range"));
                }
                let or = OriginRange {
                    lo: row.num(1)?,
                    hi: row.num(2)?,
                    task: row.num(3)?,
                    default_candidate: row.flag(4)?,
                };
                arrays[id].origin_ranges.push(or);
            }
            Some("irange") => {
                let row = r.next().expect("peeked");
                let id: usize = row.num(0)?;
                if id >= arrays.len() {
                    return Err(derr(row.line, "irange row out of range"));
                }
                let lo: i64 = row.num(1)?;
                let hi: i64 = row.num(2)?;
                arrays[id].indet_ranges.push((lo, hi));
            }
            _ => break,
        }
    }
    let n_arrays = arrays.len() as u32;

    // Cells: audit the declared set, restore root values and channel state.
    let mut cell_rows = 0usize;
    while matches!(r.peek_tag(), Some("cell") | Some("chout") | Some("chin")) {
        let row = r.next().expect("peeked");
        let id: usize = row.num(0)?;
        match row.tag {
            "cell" => {
                if id != cell_rows {
                    return Err(derr(row.line, "cell rows must be dense"));
                }
                cell_rows += 1;
                if id >= pool.cells.len() {
                    return Err(RunError::Config(format!(
                        "snapshot declares cell {id} but the pool has {}",
                        pool.cells.len()
                    )));
                }
                let name = row.name(1)?;
                let kind = row.field(2)?;
                let cell = &mut pool.cells[id];
                if cell.name != name || kind_code(cell.kind) != kind {
                    return Err(RunError::Config(format!(
                        "cell {id} mismatch: snapshot has {name}/{kind}, pool has {}/{}",
                        cell.name,
                        kind_code(cell.kind)
                    )));
                }
                let v = match row.opt_value(3)? {
                    Some(x) => Some(ck_routines(row.line, x, n_instrs)?),
                    None => None,
                };
                cell.slot_mut(crate::nonlocal::SlotKey::Root).value = v;
            }
            "chout" => {
                if id >= cell_rows {
                    return Err(derr(row.line, "chout row before its cell"));
                }
                let v = ck_routines(row.line, row.value(1)?, n_instrs)?;
                pool.cells[id].out_log.push(v);
            }
            "chin" => {
                if id >= cell_rows {
                    return Err(derr(row.line, "chin row before its cell"));
                }
                let v = ck_routines(row.line, row.value(1)?, n_instrs)?;
                pool.cells[id].input.push_back(v);
            }
            _ => unreachable!(),
        }
    }
    if cell_rows != pool.cells.len() {
        return Err(RunError::Config(format!(
            "pool declares {} cells but the snapshot lists {cell_rows}",
            pool.cells.len()
        )));
    }

    // Chains.
    let mut chains: Vec<ItemId> = Vec::new();
    while r.peek_tag() == Some("chain") {
        let row = r.next().expect("peeked");
        let id: usize = row.num(0)?;
        let head: ItemId = row.num(1)?;
        if id != chains.len() || head >= n_items {
            return Err(derr(row.line, "chain row out of range"));
        }
        chains.push(head);
    }

    // Live tasks.
    let mut tasks: Vec<Task> = (0..n_tasks as TaskId).map(blank_task).collect();
    while r.peek_tag() == Some("task") {
        // Extract the scalar fields first; the argument sub-rows need the
        // reader back.
        let (id, mut task, nargs) = {
            let row = r.next().expect("peeked");
            let id: usize = row.num(0)?;
            if id >= tasks.len() {
                return Err(derr(row.line, "task id exceeds the recorded count"));
            }
            let instr: InstrId = row.num(1)?;
            let label: u32 = row.num(2)?;
            if instr as usize >= n_instrs || label >= n_labels {
                return Err(derr(row.line, "task row out of range"));
            }
            let mut t = blank_task(id as TaskId);
            t.state = TaskState::Pending;
            t.instr = instr;
            t.label = SeqLabel(label);
            t.spawn_seq = row.num(3)?;
            t.strict_pending = row.num(4)?;
            t.next_ordinal = row.num(5)?;
            t.demanded = row.flag(6)?;
            t.spec_depth = row.num(7)?;
            t.promise = match row.field(8)? {
                "n" => None,
                hex => Some(f64::from_bits(
                    u64::from_str_radix(hex, 16)
                        .map_err(|_| derr(row.line, "bad promise bits"))?,
                )),
            };
            t.inline_runs = row.num(9)?;
            t.home_worker = row.num(10)?;
            let outs = row.field(11)?;
            if outs != "-" {
                for ch in outs.chars() {
                    t.out_status.push(match ch {
                        'P' => OutStatus::Pending,
                        'W' => OutStatus::Wrote,
                        'A' => OutStatus::Aliased,
                        'D' => OutStatus::Delegated,
                        'I' => OutStatus::Ignored,
                        _ => return Err(derr(row.line, format!("bad out status {ch:?}"))),
                    });
                }
            }
            let nargs: usize = row.num(12)?;
            (id, t, nargs)
        };
        for pos in 0..nargs {
            let a = r.expect("targ")?;
            let aid: usize = a.num(0)?;
            let apos: usize = a.num(1)?;
            if aid != id || apos != pos {
                return Err(derr(a.line, "targ row out of order"));
            }
            let dflt = a.flag(2)?;
            let indet = a.flag(3)?;
            let item_ck = |line: usize, it: ItemId| -> Result<ItemId> {
                if it >= n_items {
                    return Err(derr(line, "targ item out of range"));
                }
                Ok(it)
            };
            let arr_ck = |line: usize, arr: ArrayId| -> Result<ArrayId> {
                if arr >= n_arrays {
                    return Err(derr(line, "targ array out of range"));
                }
                Ok(arr)
            };
            let bind = match a.field(4)? {
                "ii" => ArgBind::InItem(item_ck(a.line, a.num(5)?)?),
                "iv" => ArgBind::InValue(ck_routines(a.line, a.value(5)?, n_instrs)?),
                "ie" => ArgBind::InElem(arr_ck(a.line, a.num(5)?)?, a.num(6)?),
                "isl" => ArgBind::InSlice {
                    array: arr_ck(a.line, a.num(5)?)?,
                    base: a.num(6)?,
                    lo: a.num(7)?,
                    len: a.opt_num(8)?,
                },
                "ist" => ArgBind::InStream {
                    array: arr_ck(a.line, a.num(5)?)?,
                    from: a.num(6)?,
                },
                "io" => ArgBind::InOut {
                    input: item_ck(a.line, a.num(5)?)?,
                    output: item_ck(a.line, a.num(6)?)?,
                },
                "o" => ArgBind::Out(item_ck(a.line, a.num(5)?)?),
                "oe" => ArgBind::OutElem(arr_ck(a.line, a.num(5)?)?, a.num(6)?),
                "osl" => ArgBind::OutSlice {
                    array: arr_ck(a.line, a.num(5)?)?,
                    base: a.num(6)?,
                    lo: a.num(7)?,
                    len: a.opt_num(8)?,
                },
                "ost" => ArgBind::OutStream {
                    array: arr_ck(a.line, a.num(5)?)?,
                    from: a.num(6)?,
                },
                f => return Err(derr(a.line, format!("bad binding kind {f:?}"))),
            };
            task.args.push(BindSpec {
                bind,
                default_candidate: dflt,
                indet,
            });
        }
        tasks[id] = task;
    }
    r.expect("end")?;
    if r.i < r.rows.len() {
        let row = &r.rows[r.i];
        return Err(derr(row.line, format!("unexpected {} row after end", row.tag)));
    }

    // Install the rebuilt state.
    pool.items = items;
    pool.arrays = arrays;
    pool.chains = chains;
    pool.tasks = tasks;
    pool.spawn_counter = spawn_counter;
    pool.root_ordinal = root_ordinal;
    pool.derived_count = derived_count;
    pool.live_tasks = pool
        .tasks
        .iter()
        .filter(|t| t.state == TaskState::Pending)
        .count() as u64;

    // Warm declaration closures and requeue in pool-entry order.
    let mut pending: Vec<(u64, TaskId)> = pool
        .tasks
        .iter()
        .filter(|t| t.state == TaskState::Pending)
        .map(|t| (t.spawn_seq, t.id))
        .collect();
    pending.sort_unstable();
    for &(_, id) in &pending {
        let instr = pool.tasks[id as usize].instr;
        pool.closure(instr).map_err(RunError::Config)?;
    }
    for (_, id) in pending {
        pool.try_enqueue(id);
    }
    Ok(pool)
}

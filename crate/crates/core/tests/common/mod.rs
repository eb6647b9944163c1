//! Shared registrations for the engine tests: a handful of small programs
//! (binary add, divide-and-conquer range sum, tail-recursive sum) plus
//! bind-spec shorthands and journal extractors.
#![allow(dead_code)]

use tsia_core::{ArgBind, BindSpec, EventKind, ItemId, Param, Pool, Prototype, Value};

pub fn iv(n: i64) -> BindSpec {
    ArgBind::InValue(Value::Int(n)).into()
}

pub fn bv(b: bool) -> BindSpec {
    ArgBind::InValue(Value::Bool(b)).into()
}

pub fn out(it: ItemId) -> BindSpec {
    ArgBind::Out(it).into()
}

pub fn in_item(it: ItemId) -> BindSpec {
    ArgBind::InItem(it).into()
}

/// i64 addition over two scalar ins.
pub fn register_add(p: &mut Pool) {
    p.register_host(
        Prototype::new("add")
            .param(Param::input("a"))
            .param(Param::input("b"))
            .param(Param::output("r")),
        |ctx| {
            let a = ctx.read(0)?.as_int().ok_or("a must be an int")?;
            let b = ctx.read(1)?.as_int().ok_or("b must be an int")?;
            ctx.write(2, Value::Int(a + b))
        },
    );
}

/// Divide-and-conquer range sum: each node replaces itself with two half
/// sums and one combiner, so a run exercises delegation, fresh items and
/// deep label trees.
pub fn register_sum(p: &mut Pool) {
    register_add(p);
    p.register_host(
        Prototype::new("sum")
            .param(Param::input("lo"))
            .param(Param::input("hi"))
            .param(Param::output("r"))
            .calls(&["sum", "add"]),
        |ctx| {
            let lo = ctx.read(0)?.as_int().ok_or("lo must be an int")?;
            let hi = ctx.read(1)?.as_int().ok_or("hi must be an int")?;
            if lo == hi {
                return ctx.write(2, Value::Int(lo));
            }
            let mid = (lo + hi) / 2;
            let a = ctx.new_item("a");
            let b = ctx.new_item("b");
            ctx.spawn_by_name("sum", vec![iv(lo), iv(mid), out(a)])?;
            ctx.spawn_by_name("sum", vec![iv(mid + 1), iv(hi), out(b)])?;
            let r = ctx.pass_out(2)?;
            ctx.spawn_by_name("add", vec![in_item(a), in_item(b), r.into()])?;
            Ok(())
        },
    );
}

/// Tail-recursive range sum: one self-spawn per step with the out
/// delegated forward, the shape inline unrolling applies to.
pub fn register_sum_tail(p: &mut Pool) {
    p.register_host(
        Prototype::new("sum_tail")
            .param(Param::input("lo"))
            .param(Param::input("hi"))
            .param(Param::input("acc"))
            .param(Param::output("r"))
            .calls(&["sum_tail"]),
        |ctx| {
            let lo = ctx.read(0)?.as_int().ok_or("lo must be an int")?;
            let hi = ctx.read(1)?.as_int().ok_or("hi must be an int")?;
            let acc = ctx.read(2)?.as_int().ok_or("acc must be an int")?;
            if lo > hi {
                return ctx.write(3, Value::Int(acc));
            }
            let r = ctx.pass_out(3)?;
            ctx.spawn_by_name("sum_tail", vec![iv(lo + 1), iv(hi), iv(acc + lo), r.into()])?;
            Ok(())
        },
    );
}

/// Instruction names of Exec events, in order.
pub fn exec_order(p: &Pool) -> Vec<String> {
    p.journal
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Exec)
        .map(|e| e.instr.clone())
        .collect()
}

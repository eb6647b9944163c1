//! Arrays of items under deductive rules, slice delegation, stream windows
//! with bounded lookahead, element release and re-derivation, and demand
//! versus supply drive over speculative producers.

mod common;

use common::*;
use tsia_core::{
    ArgBind, EventKind, Param, Policy, Pool, Prototype, Rule, RuleArg, RunError, TaskState,
    UseDecl, Value,
};

/// Array whose element i is produced from element i-1 by a rule, with a
/// hand-written seed at the low edge. Returns (array, rule instr).
fn chain_array(p: &mut Pool, hi: Option<i64>) -> tsia_core::ArrayId {
    let inc = p.register_host(
        Prototype::new("inc")
            .param(Param::input("prev"))
            .param(Param::output("next")),
        |ctx| {
            let v = ctx.read(0)?.as_int().unwrap();
            ctx.write(1, Value::Int(v + 1))
        },
    );
    let f = p.new_array_raw("f", 0, hi);
    p.write_elem_raw(f, 0, Value::Int(0));
    p.attach_rule(
        f,
        Rule {
            instr: inc,
            ins: vec![RuleArg::Elem { offset: -1 }],
            lo: 1,
            hi,
        },
    );
    f
}

#[test]
fn demanded_elements_materialize_their_dependency_chain() {
    let mut p = Pool::new(Policy::lifo().demand());
    let f = chain_array(&mut p, Some(100));
    let take = p.register_host(
        Prototype::new("take")
            .param(Param::input("x"))
            .param(Param::output("r")),
        |ctx| {
            let v = ctx.read(0)?;
            ctx.write(1, v)
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(take, vec![ArgBind::InElem(f, 40).into(), out(r)])
        .unwrap();
    p.run().unwrap();

    assert_eq!(p.value(r), Some(Value::Int(40)));
    let arr = &p.arrays[f as usize];
    assert_eq!(arr.elems.len(), 41, "exactly f[0..=40] materialized");
    assert!(arr.elems.keys().all(|&i| i <= 40), "nothing past the demand");
    // take plus one rule instantiation per derived element.
    assert_eq!(p.stats.steps, 41);
}

#[test]
fn demand_drive_skips_unchosen_speculative_producers() {
    // A selector aliases its out to one of two candidate items; the other
    // candidate's producer is wasted work under supply drive and never
    // admitted under demand drive.
    fn build(pol: Policy) -> (Pool, tsia_core::ItemId) {
        let mut p = Pool::new(pol);
        let w = p.register_host(
            Prototype::new("w")
                .param(Param::input("v"))
                .param(Param::output("o").with_decl(UseDecl::del_eva_ign())),
            |ctx| {
                let v = ctx.read(0)?;
                ctx.write(1, v)
            },
        );
        let sel = p.register_host(
            Prototype::new("sel")
                .param(Param::input("flag"))
                .param(Param::input("a").with_decl(UseDecl::del_eva_ign()))
                .param(Param::input("b").with_decl(UseDecl::del_eva_ign()))
                .param(Param::output("r")),
            |ctx| {
                let f = ctx.read(0)?;
                if f == Value::Bool(true) {
                    ctx.alias_to_param(3, 1)
                } else {
                    ctx.alias_to_param(3, 2)
                }
            },
        );
        let a = p.new_item_raw(Some("a"));
        let b = p.new_item_raw(Some("b"));
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(w, vec![iv(10), out(a)]).unwrap();
        p.spawn_root(w, vec![iv(20), out(b)]).unwrap();
        p.spawn_root(sel, vec![bv(true), in_item(a), in_item(b), out(r)])
            .unwrap();
        p.run().unwrap();
        (p, r)
    }

    let (supply, r) = build(Policy::lifo());
    assert_eq!(supply.value(r), Some(Value::Int(10)));
    assert_eq!(
        supply.executed_irrelevant().len(),
        1,
        "supply drive runs the unchosen producer"
    );

    let (demand, r) = build(Policy::lifo().demand());
    assert_eq!(demand.value(r), Some(Value::Int(10)));
    assert!(
        demand.executed_irrelevant().is_empty(),
        "demand drive must not execute work no pinned item needs"
    );
    assert!(
        demand.stats.cancelled >= 1,
        "the unchosen producer is cancelled, not run"
    );

    // A speculation allowance of one level admits the candidates again.
    let (spec, r) = build(Policy::lifo().demand().with_spec_limit(1));
    assert_eq!(spec.value(r), Some(Value::Int(10)));
    assert_eq!(spec.executed_irrelevant().len(), 1);
}

#[test]
fn stream_consumers_see_a_window_not_the_whole_array() {
    let mut p = Pool::new(Policy::lifo());
    let f = chain_array(&mut p, None);
    let fold = p.register_host(
        Prototype::new("fold")
            .param(Param::input("s").stream(2))
            .param(Param::input("k"))
            .param(Param::input("acc"))
            .param(Param::output("r").with_decl(UseDecl::del_eva())),
        |ctx| {
            let k = ctx.read(1)?.as_int().unwrap();
            if k == 50 {
                let acc = ctx.read(2)?;
                return ctx.write(3, acc);
            }
            let v = ctx.read_elem(0, 0)?.as_int().unwrap();
            let acc = ctx.read(2)?.as_int().unwrap();
            let tail = ctx.stream_tail(0, 1)?;
            let rest = ctx.pass_out(3)?;
            ctx.spawn_by_name(
                "fold",
                vec![tail.into(), iv(k + 1), iv(acc + v), rest.into()],
            )
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(
        fold,
        vec![ArgBind::InStream { array: f, from: 0 }.into(), iv(0), iv(0), out(r)],
    )
    .unwrap();
    p.run().unwrap();

    // 0 + 1 + ... + 49.
    assert_eq!(p.value(r), Some(Value::Int(1225)));
    let arr = &p.arrays[f as usize];
    assert!(
        arr.peak_live <= 25,
        "window plus prefetch bounds live elements, got {}",
        arr.peak_live
    );
    assert!(
        arr.materialized < 80,
        "open array must not materialize far past the fold, got {}",
        arr.materialized
    );
}

#[test]
fn an_open_array_budget_stops_a_runaway_stream() {
    let mut p = Pool::new(Policy::lifo());
    let f = chain_array(&mut p, None);
    p.set_array_budget(f, 30);
    let chase = p.register_host(
        Prototype::new("chase")
            .param(Param::input("s").stream(2))
            .param(Param::output("r").with_decl(UseDecl::del_eva())),
        |ctx| {
            let _ = ctx.read_elem(0, 0)?;
            let tail = ctx.stream_tail(0, 1)?;
            let rest = ctx.pass_out(1)?;
            ctx.spawn_by_name("chase", vec![tail.into(), rest.into()])
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(chase, vec![ArgBind::InStream { array: f, from: 0 }.into(), out(r)])
        .unwrap();
    match p.run() {
        Err(RunError::BudgetExhausted { budget }) => assert_eq!(budget, 30),
        other => panic!("expected budget exhaustion, got {other:?}"),
    }
}

#[test]
fn released_elements_are_rederived_identically() {
    let mut p = Pool::new(Policy::lifo());
    let f = chain_array(&mut p, Some(100));
    let take = p.register_host(
        Prototype::new("take")
            .param(Param::input("x"))
            .param(Param::output("r")),
        |ctx| {
            let v = ctx.read(0)?;
            ctx.write(1, v)
        },
    );
    let r1 = p.new_item_raw(Some("r1"));
    p.pin(r1);
    p.spawn_root(take, vec![ArgBind::InElem(f, 5).into(), out(r1)])
        .unwrap();
    p.run().unwrap();
    assert_eq!(p.value(r1), Some(Value::Int(5)));
    let first = p.arrays[f as usize].evaluated_total;
    assert_eq!(first, 6, "the seed write plus five rule firings for f[1..=5]");

    // Rule-produced elements are released as soon as nothing consumes
    // them; only the raw seed survives the first run.
    assert_eq!(p.arrays[f as usize].live_evaluated, 1);
    assert_eq!(p.elem_value(f, 3), None, "released element holds no value");
    assert!(
        p.release_element(f, 0).is_err(),
        "the seed has no rule, so releasing it would lose it for good"
    );

    // Demanding a released element re-derives the chain from the seed and
    // lands on the same value.
    let r2 = p.new_item_raw(Some("r2"));
    p.pin(r2);
    p.spawn_root(take, vec![ArgBind::InElem(f, 3).into(), out(r2)])
        .unwrap();
    p.run().unwrap();
    assert_eq!(p.value(r2), Some(Value::Int(3)));
    assert_eq!(
        p.arrays[f as usize].evaluated_total,
        first + 3,
        "f[1..=3] fire again to rebuild the released prefix"
    );
}

#[test]
fn out_slices_delegate_ranges_and_in_slices_wait_for_them() {
    let mut p = Pool::new(Policy::lifo());
    let f = p.new_array_raw("f", 0, Some(7));

    // fill(lo, len; f[lo..lo+len]) writes i*i into its range; splits in two
    // when the range is longer than 2.
    let fill = p.register_host(
        Prototype::new("fill")
            .param(Param::input("lo"))
            .param(Param::input("len"))
            .param(Param::output("seg").array().with_decl(UseDecl::del_eva()))
            .calls(&["fill"]),
        |ctx| {
            let lo = ctx.read(0)?.as_int().unwrap();
            let len = ctx.read(1)?.as_int().unwrap();
            if len <= 2 {
                for j in 0..len {
                    ctx.write_elem(2, lo + j, Value::Int((lo + j) * (lo + j)))?;
                }
                return Ok(());
            }
            let half = len / 2;
            let left = ctx.sub_slice_out(2, lo, lo + half - 1, lo)?;
            let right = ctx.sub_slice_out(2, lo + half, lo + len - 1, lo + half)?;
            ctx.spawn_by_name("fill", vec![iv(lo), iv(half), left.into()])?;
            ctx.spawn_by_name("fill", vec![iv(lo + half), iv(len - half), right.into()])
        },
    );
    let total = p.register_host(
        Prototype::new("total")
            .param(Param::input("seg").array())
            .param(Param::output("r")),
        |ctx| {
            let mut s = 0;
            for j in 0..8 {
                s += ctx.read_elem(0, j)?.as_int().unwrap();
            }
            ctx.write(1, Value::Int(s))
        },
    );

    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(
        total,
        vec![
            ArgBind::InSlice {
                array: f,
                base: 0,
                lo: 0,
                len: Some(8),
            }
            .into(),
            out(r),
        ],
    )
    .unwrap();
    p.spawn_root(
        fill,
        vec![
            iv(0),
            iv(8),
            ArgBind::OutSlice {
                array: f,
                base: 0,
                lo: 0,
                len: Some(8),
            }
            .into(),
        ],
    )
    .unwrap();
    p.run().unwrap();

    // 0+1+4+9+16+25+36+49.
    assert_eq!(p.value(r), Some(Value::Int(140)));
    assert!(
        p.tasks.iter().all(|t| t.state == TaskState::Done),
        "every fill segment discharged its range"
    );
    // The strict slice made the consumer wait until all eight arrived.
    let order = exec_order(&p);
    assert_eq!(order.last().map(String::as_str), Some("total"));
    assert!(p.stats.fence_waits >= 1 || order[0] == "fill");
}

#[test]
fn rule_arrays_release_behind_a_stream_window() {
    // With only stream consumers, elements far behind the window do not
    // stay evaluated: the pool releases them once their consumers finish.
    let mut p = Pool::new(Policy::lifo());
    let f = chain_array(&mut p, None);
    let chase = p.register_host(
        Prototype::new("chase")
            .param(Param::input("s").stream(2))
            .param(Param::input("k"))
            .param(Param::output("r").with_decl(UseDecl::del_eva())),
        |ctx| {
            let k = ctx.read(1)?.as_int().unwrap();
            let v = ctx.read_elem(0, 0)?.as_int().unwrap();
            if k == 60 {
                return ctx.write(2, Value::Int(v));
            }
            let tail = ctx.stream_tail(0, 1)?;
            let rest = ctx.pass_out(2)?;
            ctx.spawn_by_name("chase", vec![tail.into(), iv(k + 1), rest.into()])
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(
        chase,
        vec![ArgBind::InStream { array: f, from: 0 }.into(), iv(0), out(r)],
    )
    .unwrap();
    p.run().unwrap();
    assert_eq!(p.value(r), Some(Value::Int(60)));
    let arr = &p.arrays[f as usize];
    assert!(
        arr.live_evaluated <= arr.peak_live,
        "live count stays within the observed peak"
    );
    assert!(
        arr.peak_live as i64 <= 25,
        "peak live elements bounded by window + prefetch, got {}",
        arr.peak_live
    );
    assert!(
        arr.evaluated_total >= 60,
        "everything up to the stop index was derived"
    );
}

#[test]
fn journal_reconciles_with_counters_on_an_array_run() {
    let mut p = Pool::new(Policy::lifo());
    let f = chain_array(&mut p, Some(64));
    let take = p.register_host(
        Prototype::new("take")
            .param(Param::input("x"))
            .param(Param::output("r")),
        |ctx| {
            let v = ctx.read(0)?;
            ctx.write(1, v)
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(take, vec![ArgBind::InElem(f, 12).into(), out(r)])
        .unwrap();
    p.run().unwrap();

    let execs = p
        .journal
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Exec)
        .count() as u64;
    let evals = p
        .journal
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Evaluate)
        .count() as u64;
    assert_eq!(p.stats.steps, execs);
    assert_eq!(p.stats.evaluations, evals);
    assert_eq!(p.value(r), Some(Value::Int(12)));
}

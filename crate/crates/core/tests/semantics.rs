//! Item discipline end to end: what each use declaration permits, how a
//! task discharges responsibility for its outs, aliasing, competing
//! origins, and the failure reports when a program cannot progress.

mod common;

use common::*;
use tsia_core::{
    ArgBind, BindSpec, EventKind, Param, Policy, Pool, Prototype, RunError, TaskState, UseDecl,
    Value,
};

#[test]
fn reading_requires_an_evaluation_right() {
    for mode in UseDecl::all_modes() {
        let mut p = Pool::new(Policy::lifo());
        let probe = p.register_host(
            Prototype::new("probe")
                .param(Param::input("x").with_decl(mode))
                .param(Param::output("r")),
            |ctx| {
                let v = ctx.read(0)?;
                ctx.write(1, v)
            },
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(probe, vec![iv(7), out(r)]).unwrap();
        let res = p.run();
        if mode.eva {
            res.unwrap_or_else(|e| panic!("{} must allow reads: {e}", mode.mode_name()));
            assert_eq!(p.value(r), Some(Value::Int(7)), "{}", mode.mode_name());
        } else {
            let err = res.expect_err(mode.mode_name());
            assert!(
                err.to_string().contains("not declared for evaluation"),
                "{}: {err}",
                mode.mode_name()
            );
        }
    }
}

#[test]
fn writing_requires_an_evaluation_right() {
    for mode in UseDecl::all_modes() {
        let mut p = Pool::new(Policy::lifo());
        let probe = p.register_host(
            Prototype::new("probe").param(Param::output("r").with_decl(mode)),
            |ctx| ctx.write(0, Value::Int(1)),
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(probe, vec![out(r)]).unwrap();
        let res = p.run();
        if mode.eva {
            res.unwrap_or_else(|e| panic!("{} must allow writes: {e}", mode.mode_name()));
            assert_eq!(p.value(r), Some(Value::Int(1)), "{}", mode.mode_name());
        } else {
            let err = res.expect_err(mode.mode_name());
            assert!(
                err.to_string().contains("not declared for evaluation"),
                "{}: {err}",
                mode.mode_name()
            );
        }
    }
}

#[test]
fn delegating_requires_a_delegation_right() {
    for mode in UseDecl::all_modes() {
        let mut p = Pool::new(Policy::lifo());
        p.register_host(
            Prototype::new("w").param(Param::output("r")),
            |ctx| ctx.write(0, Value::Int(42)),
        );
        let probe = p.register_host(
            Prototype::new("probe")
                .param(Param::output("r").with_decl(mode))
                .calls(&["w"]),
            |ctx| {
                let r = ctx.pass_out(0)?;
                ctx.spawn_by_name("w", vec![r.into()])
            },
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(probe, vec![out(r)]).unwrap();
        let res = p.run();
        if mode.del {
            res.unwrap_or_else(|e| panic!("{} must allow delegation: {e}", mode.mode_name()));
            assert_eq!(p.value(r), Some(Value::Int(42)), "{}", mode.mode_name());
        } else {
            let err = res.expect_err(mode.mode_name());
            assert!(
                err.to_string().contains("no delegation right"),
                "{}: {err}",
                mode.mode_name()
            );
        }
    }
}

#[test]
fn leaving_an_out_unresolved_requires_an_ignore_right() {
    for mode in UseDecl::all_modes() {
        let mut p = Pool::new(Policy::lifo());
        let probe = p.register_host(
            Prototype::new("probe").param(Param::output("r").with_decl(mode)),
            |_ctx| Ok(()),
        );
        let r = p.new_item_raw(Some("r"));
        let tid = p.spawn_root(probe, vec![out(r)]).unwrap();
        let res = p.run();
        if mode.ign {
            res.unwrap_or_else(|e| panic!("{} must allow ignoring: {e}", mode.mode_name()));
            assert_eq!(p.value(r), None, "{}", mode.mode_name());
            assert_eq!(
                p.tasks[tid as usize].out_status[0],
                tsia_core::OutStatus::Ignored,
                "{}",
                mode.mode_name()
            );
        } else {
            let err = res.expect_err(mode.mode_name());
            assert!(
                err.to_string().contains("left unresolved without an ignore right"),
                "{}: {err}",
                mode.mode_name()
            );
        }
    }
}

/// Every finished task discharged every scalar out some way; nothing ends
/// the run still pending, and the running totals agree with the journal.
#[test]
fn replacement_accounts_for_every_out() {
    let mut p = Pool::new(Policy::lifo());
    register_sum(&mut p);
    let sum = p.instr_id("sum").unwrap();
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(sum, vec![iv(1), iv(64), out(r)]).unwrap();
    p.run().unwrap();

    assert_eq!(p.value(r), Some(Value::Int(64 * 65 / 2)));
    assert_eq!(p.live_task_count(), 0);
    for t in &p.tasks {
        assert_eq!(t.state, TaskState::Done, "task {} unfinished", t.id);
        for (a, st) in t.out_status.iter().enumerate() {
            let is_out = matches!(
                t.args[a].bind,
                ArgBind::Out(_) | ArgBind::InOut { .. }
            );
            if is_out {
                assert_ne!(
                    *st,
                    tsia_core::OutStatus::Pending,
                    "task {} out {a} never discharged",
                    t.id
                );
            }
        }
    }
    assert_eq!(p.stats.steps, p.journal.count(EventKind::Exec));
    assert_eq!(p.stats.spawned, p.journal.count(EventKind::Spawn));
    assert_eq!(p.stats.evaluations, p.journal.count(EventKind::Evaluate));
    assert_eq!(p.stats.aliases, p.journal.count(EventKind::Alias));
    assert_eq!(p.stats.cancelled, p.journal.count(EventKind::Cancel));
    assert_eq!(p.stats.spawned as usize, p.tasks.len());
}

/// A chain of tasks each aliasing its out to the next one's: one real
/// write at the end resolves the whole chain, demand and pins flow through.
#[test]
fn aliases_forward_values_pins_and_demand() {
    let mut p = Pool::new(Policy::lifo());
    let fwd = p.register_host(
        Prototype::new("fwd")
            .param(Param::input("n"))
            .param(Param::output("r"))
            .calls(&["fwd"]),
        |ctx| {
            let n = ctx.read(0)?.as_int().ok_or("n must be an int")?;
            if n == 0 {
                return ctx.write(1, Value::Int(42));
            }
            let t = ctx.new_item("t");
            ctx.spawn_by_name("fwd", vec![iv(n - 1), out(t)])?;
            ctx.alias_to_item(1, t)
        },
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(fwd, vec![iv(10), out(r)]).unwrap();
    p.run().unwrap();

    assert_eq!(p.value(r), Some(Value::Int(42)));
    assert_eq!(p.stats.aliases, 10);
    assert_eq!(p.stats.evaluations, 1);
    assert_eq!(p.journal.count(EventKind::Alias), 10);
    // The pin reached the terminal item through the alias chain.
    let terminal = p.resolve(r);
    assert_ne!(terminal, r);
    assert!(p.items[terminal as usize].pinned);
}

#[test]
fn first_resolution_wins_and_losers_are_cancelled() {
    let run = |policy: Policy| {
        let mut p = Pool::new(policy);
        let w = p.register_host(
            Prototype::new("w")
                .param(Param::input("v"))
                .param(Param::output("r").with_decl(UseDecl::del_eva_ign())),
            |ctx| {
                let v = ctx.read(0)?;
                ctx.write(1, v)
            },
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(w, vec![iv(5), out(r)]).unwrap();
        p.spawn_root(w, vec![iv(7), out(r)]).unwrap();
        p.run().unwrap();
        (p.value(r), p.stats.cancelled, p.stats.discarded_writes)
    };

    // Depth-first order runs the later spawn first; breadth-first the earlier.
    let (v, cancelled, discarded) = run(Policy::lifo());
    assert_eq!(v, Some(Value::Int(7)));
    assert_eq!(cancelled, 1);
    assert_eq!(discarded, 0);

    let (v, cancelled, discarded) = run(Policy::fifo());
    assert_eq!(v, Some(Value::Int(5)));
    assert_eq!(cancelled, 1);
    assert_eq!(discarded, 0);
}

/// In comparative mode both candidates run to completion; the duplicate
/// resolution is discarded after a value check unless the item was
/// declared indeterminate.
#[test]
fn comparative_mode_checks_competing_resolutions() {
    let run = |a: i64, b: i64, indet: bool| {
        let mut p = Pool::new(Policy::lifo());
        p.verify_indet = true;
        let w = p.register_host(
            Prototype::new("w")
                .param(Param::input("v"))
                .param(Param::output("r").with_decl(UseDecl::del_eva_ign())),
            |ctx| {
                let v = ctx.read(0)?;
                ctx.write(1, v)
            },
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        let mk = |p: &mut Pool, v: i64| {
            let mut spec = BindSpec::new(ArgBind::Out(r));
            spec.indet = indet;
            p.spawn_root(w, vec![iv(v), spec]).unwrap();
        };
        mk(&mut p, a);
        mk(&mut p, b);
        let res = p.run();
        (res, p.value(r), p.stats.discarded_writes)
    };

    // Agreement: both run, the duplicate is discarded quietly.
    let (res, v, discarded) = run(5, 5, false);
    res.unwrap();
    assert_eq!(v, Some(Value::Int(5)));
    assert_eq!(discarded, 1);

    // Disagreement without an indeterminacy declaration is a fault.
    let (res, _, _) = run(5, 7, false);
    let err = res.unwrap_err();
    assert!(err.to_string().contains("disagreement"), "{err}");

    // Declared indeterminate: any candidate's value is acceptable.
    let (res, v, discarded) = run(5, 7, true);
    res.unwrap();
    assert_eq!(v, Some(Value::Int(7)));
    assert_eq!(discarded, 1);
}

/// A default candidate is admitted only after every other candidate has
/// terminated ignoring the item; if someone resolves it, the default is
/// dropped as irrelevant.
#[test]
fn default_candidates_fill_in_after_ignores() {
    let build = |flag1: bool, flag2: bool| {
        let mut p = Pool::new(Policy::lifo());
        let cond = p.register_host(
            Prototype::new("cond")
                .param(Param::input("flag"))
                .param(Param::output("r").with_decl(UseDecl::del_eva_ign())),
            |ctx| {
                let f = ctx.read(0)?.as_bool().ok_or("flag must be a bool")?;
                if f {
                    ctx.write(1, Value::Bool(true))?;
                }
                Ok(())
            },
        );
        let dflt = p.register_host(
            Prototype::new("dflt").param(Param::output("r")),
            |ctx| ctx.write(0, Value::Bool(false)),
        );
        let r = p.new_item_raw(Some("r"));
        p.pin(r);
        p.spawn_root(cond, vec![bv(flag1), out(r)]).unwrap();
        p.spawn_root(cond, vec![bv(flag2), out(r)]).unwrap();
        let mut spec = BindSpec::new(ArgBind::Out(r));
        spec.default_candidate = true;
        p.spawn_root(dflt, vec![spec]).unwrap();
        p.run().unwrap();
        (p.value(r), exec_order(&p), p.stats.cancelled)
    };

    // Nobody writes: the default runs last and fills in.
    let (v, order, _) = build(false, false);
    assert_eq!(v, Some(Value::Bool(false)));
    assert_eq!(order.last().map(String::as_str), Some("dflt"));

    // A candidate writes: the default never runs and is cancelled.
    let (v, order, cancelled) = build(true, false);
    assert_eq!(v, Some(Value::Bool(true)));
    assert!(!order.iter().any(|n| n == "dflt"), "{order:?}");
    assert_eq!(cancelled, 1);
}

#[test]
fn a_second_default_candidate_is_a_fault() {
    let mut p = Pool::new(Policy::lifo());
    let dflt = p.register_host(
        Prototype::new("dflt").param(Param::output("r")),
        |ctx| ctx.write(0, Value::Bool(false)),
    );
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    for _ in 0..2 {
        let mut spec = BindSpec::new(ArgBind::Out(r));
        spec.default_candidate = true;
        p.spawn_root(dflt, vec![spec]).unwrap();
    }
    let err = p.run().unwrap_err();
    assert!(
        err.to_string().contains("more than one default candidate"),
        "{err}"
    );
}

/// A body may block on a conditional in before any effect; it reruns when
/// the item arrives.
#[test]
fn blocked_bodies_rerun_after_the_item_arrives() {
    let mut p = Pool::new(Policy::lifo());
    p.register_host(
        Prototype::new("prod").param(Param::output("x")),
        |ctx| ctx.write(0, Value::Int(9)),
    );
    let maybe = p.register_host(
        Prototype::new("maybe")
            .param(Param::input("x").with_decl(UseDecl::eva_ign()))
            .param(Param::output("r")),
        |ctx| match ctx.read_opt(0)? {
            Some(v) => ctx.write(1, v),
            None => Err(ctx.block_on(&[0])),
        },
    );
    let prod = p.instr_id("prod").unwrap();
    let x = p.new_item_raw(Some("x"));
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(prod, vec![out(x)]).unwrap();
    p.spawn_root(maybe, vec![in_item(x), out(r)]).unwrap();
    p.run().unwrap();

    assert_eq!(p.value(r), Some(Value::Int(9)));
    // Depth-first pops the consumer first; it blocks, the producer runs,
    // the consumer reruns.
    assert_eq!(exec_order(&p), vec!["maybe", "prod", "maybe"]);
    assert_eq!(p.stats.steps, 3);
}

#[test]
fn blocking_after_effects_is_a_fault() {
    let mut p = Pool::new(Policy::lifo());
    p.register_host(Prototype::new("noop"), |_ctx| Ok(()));
    let bad = p.register_host(
        Prototype::new("bad")
            .param(Param::input("x").with_decl(UseDecl::eva_ign()))
            .param(Param::output("r").with_decl(UseDecl::del_eva_ign()))
            .calls(&["noop"]),
        |ctx| {
            ctx.spawn_by_name("noop", vec![])?;
            Err(ctx.block_on(&[0]))
        },
    );
    let x = p.new_item_raw(Some("x"));
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(bad, vec![in_item(x), out(r)]).unwrap();
    let err = p.run().unwrap_err();
    assert!(err.to_string().contains("blocked after performing effects"), "{err}");
}

#[test]
fn deadlocked_cycles_are_reported_with_their_tasks() {
    let mut p = Pool::new(Policy::lifo());
    let pass = p.register_host(
        Prototype::new("pass")
            .param(Param::input("x"))
            .param(Param::output("y")),
        |ctx| {
            let v = ctx.read(0)?;
            ctx.write(1, v)
        },
    );
    let i1 = p.new_item_raw(Some("i1"));
    let i2 = p.new_item_raw(Some("i2"));
    p.pin(i1);
    p.pin(i2);
    p.spawn_root(pass, vec![in_item(i1), out(i2)]).unwrap();
    p.spawn_root(pass, vec![in_item(i2), out(i1)]).unwrap();
    match p.run().unwrap_err() {
        RunError::Deadlock { report } => {
            assert!(report.contains("dependence cycle"), "{report}");
            assert!(report.contains("pass"), "{report}");
        }
        other => panic!("expected a deadlock, got {other}"),
    }
}

#[test]
fn items_with_no_possible_origin_are_named() {
    let mut p = Pool::new(Policy::lifo());
    let pass = p.register_host(
        Prototype::new("pass")
            .param(Param::input("x"))
            .param(Param::output("y")),
        |ctx| {
            let v = ctx.read(0)?;
            ctx.write(1, v)
        },
    );
    let orphan = p.new_item_raw(Some("orphan"));
    let r = p.new_item_raw(Some("r"));
    p.pin(r);
    p.spawn_root(pass, vec![in_item(orphan), out(r)]).unwrap();
    match p.run().unwrap_err() {
        RunError::Deadlock { report } => {
            assert!(report.contains("no possible origin"), "{report}");
            assert!(report.contains("orphan"), "{report}");
            assert!(report.contains("pass"), "{report}");
        }
        other => panic!("expected a deadlock, got {other}"),
    }
}

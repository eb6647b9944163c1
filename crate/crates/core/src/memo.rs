use crate::value::{InstrId, Value};
use std::collections::HashMap;

/// Template argument for a memoized child spawn. Values that were computed
/// from evaluated inputs are key-determined and stored as literals;
/// delegated parameters and locally created items are positions to be
/// re-bound at replay.
#[derive(Debug, Clone)]
pub enum TplArg {
    Lit(Value),
    /// Forward the replaying task's argument at this parameter position.
    Param(usize),
    /// Re-slice the replaying task's array argument at `param`.
    ParamSlice {
        param: usize,
        rel_base: i64,
        lo: i64,
        len: Option<i64>,
    },
    ParamElem { param: usize, rel: i64 },
    ParamStream { param: usize, rel: i64 },
    /// A fresh local item, identified by creation ordinal within the body.
    Fresh(usize),
    FreshInOut { input: usize, output: usize },
}

/// One argument of a templated spawn with its spawn-site modifiers.
#[derive(Debug, Clone)]
pub struct TplBind {
    pub arg: TplArg,
    pub default_candidate: bool,
    pub indet: bool,
}

#[derive(Debug, Clone)]
pub struct TplSpawn {
    pub instr: InstrId,
    pub args: Vec<TplBind>,
    pub promise: Option<f64>,
}

/// Recorded effects of one pure execution: direct writes and aliases onto
/// out parameters, fresh items created, and children spawned. Replay
/// reproduces the outcome without running the body.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub fresh_items: usize,
    /// (param index, value) for scalar out writes.
    pub writes: Vec<(usize, Value)>,
    /// (param index, target) where target is another param position or a
    /// fresh item: out aliased without evaluation.
    pub aliases: Vec<(usize, TplArg)>,
    /// Element writes relative to an array out param.
    pub elem_writes: Vec<(usize, i64, Value)>,
    pub spawns: Vec<TplSpawn>,
}

/// Memo key: instruction id plus the stable key form of every evaluated
/// strict input. Delegated (non-evaluated) inputs are excluded, which is
/// what lets structurally equal subproblems hit regardless of where their
/// data comes from.
pub fn memo_key(instr: InstrId, eval_ins: &[String]) -> String {
    let mut k = format!("{instr}");
    for s in eval_ins {
        k.push('|');
        k.push_str(s);
    }
    k
}

#[derive(Debug, Default)]
pub struct MemoCache {
    map: HashMap<String, Outcome>,
    pub hits: u64,
    pub misses: u64,
}

impl MemoCache {
    pub fn lookup(&mut self, key: &str) -> Option<Outcome> {
        let r = self.map.get(key).cloned();
        if r.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        r
    }

    pub fn store(&mut self, key: String, outcome: Outcome) {
        self.map.entry(key).or_insert(outcome);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

use crate::item::ItemId;
use crate::value::{InstrId, Value};
use std::collections::BTreeMap;

pub type ArrayId = u32;

/// Argument template for a deductive rule instantiated at element index i.
#[derive(Debug, Clone)]
pub enum RuleArg {
    /// The element `self_array[i + offset]`.
    Elem { offset: i64 },
    /// An element of another array at the same affine offset.
    OtherElem { array: ArrayId, offset: i64 },
    /// The index i itself, as an Int value.
    SelfIndex,
    Lit(Value),
}

/// A deductive rule: one producing instantiation per element, spawned when
/// the element is needed (demand drive) or when the supply window reaches
/// it. Rules must be pure so released elements can be re-derived.
#[derive(Debug, Clone)]
pub struct Rule {
    pub instr: InstrId,
    /// In-argument templates, in parameter order; the out parameter is the
    /// element being produced.
    pub ins: Vec<RuleArg>,
    pub lo: i64,
    pub hi: Option<i64>,
}

impl Rule {
    pub fn covers(&self, i: i64) -> bool {
        i >= self.lo && self.hi.map_or(true, |h| i <= h)
    }
}

/// Per-task origin responsibility for a contiguous index range, created by
/// binding an out-slice. Delegation moves responsibility to children; an
/// element write discharges it pointwise.
#[derive(Debug, Clone, Copy)]
pub struct OriginRange {
    pub lo: i64,
    pub hi: i64,
    pub task: crate::item::TaskId,
    pub default_candidate: bool,
}

#[derive(Debug, Clone)]
pub struct ArrayDecl {
    pub name: String,
    pub lo: i64,
    /// None = open (stream).
    pub hi: Option<i64>,
    pub elems: BTreeMap<i64, ItemId>,
    pub rules: Vec<Rule>,
    pub origin_ranges: Vec<OriginRange>,
    /// Label under which rule instantiations are sequenced.
    pub anchor: Option<crate::label::SeqLabel>,
    pub anchor_ordinal: u32,
    /// Ranges whose writes were declared indeterminate at an out-slice
    /// spawn site.
    pub indet_ranges: Vec<(i64, i64)>,
    /// Index of the highest element a supply-drive window has been pushed
    /// past, so open arrays grow incrementally.
    pub supplied_to: i64,
    /// Hard cap on how many elements an open array may materialize.
    pub budget: u64,
    pub materialized: u64,
    pub live_evaluated: u64,
    pub peak_live: u64,
    /// Count of Evaluate events on elements of this array.
    pub evaluated_total: u64,
}

impl ArrayDecl {
    pub fn new(name: impl Into<String>, lo: i64, hi: Option<i64>) -> ArrayDecl {
        ArrayDecl {
            name: name.into(),
            lo,
            hi,
            elems: BTreeMap::new(),
            rules: Vec::new(),
            origin_ranges: Vec::new(),
            anchor: None,
            anchor_ordinal: 0,
            indet_ranges: Vec::new(),
            supplied_to: lo - 1,
            budget: 65_536,
            materialized: 0,
            live_evaluated: 0,
            peak_live: 0,
            evaluated_total: 0,
        }
    }

    pub fn in_bounds(&self, i: i64) -> bool {
        i >= self.lo && self.hi.map_or(true, |h| i <= h)
    }

    pub fn rule_for(&self, i: i64) -> Option<usize> {
        self.rules.iter().position(|r| r.covers(i))
    }
}

use crate::usedecl::{Role, UseDecl};
use crate::value::{InstrId, Value};
use std::sync::Arc;

pub type CellId = u32;
pub type ChainId = u32;

/// Parameter shape: plain scalar, an array view, or a stream view with an
/// evaluated window at its head and a lazy tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTy {
    Scalar,
    Array,
    Stream { window: usize },
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: &'static str,
    pub role: Role,
    pub ty: ParamTy,
    pub decl: UseDecl,
}

impl Param {
    pub fn input(name: &'static str) -> Param {
        Param {
            name,
            role: Role::In,
            ty: ParamTy::Scalar,
            decl: UseDecl::default(),
        }
    }
    pub fn inout(name: &'static str) -> Param {
        Param {
            name,
            role: Role::InOut,
            ty: ParamTy::Scalar,
            decl: UseDecl::default(),
        }
    }
    pub fn output(name: &'static str) -> Param {
        Param {
            name,
            role: Role::Out,
            ty: ParamTy::Scalar,
            decl: UseDecl::default(),
        }
    }
    pub fn with_decl(mut self, d: UseDecl) -> Param {
        self.decl = d;
        self
    }
    pub fn array(mut self) -> Param {
        self.ty = ParamTy::Array;
        self
    }
    pub fn stream(mut self, window: usize) -> Param {
        self.ty = ParamTy::Stream { window };
        self
    }
}

/// A nonlocal reference in a prototype: either a declared cell (updown,
/// down, static, interaction channel, instruction slot) with the access the
/// body needs, or a channel handle arriving through a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlocalRef {
    Cell(CellId, crate::nonlocal::Access),
    ParamChannel(usize),
}

/// The declared surface of an instruction. May-touch sets and purity come
/// from declarations only: the nonlocals named here plus the closure over
/// the named callees. Spawning an undeclared instruction is a runtime
/// fault, which is what keeps the declarations honest.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub name: String,
    pub params: Vec<Param>,
    pub nonlocals: Vec<NonlocalRef>,
    /// Names of instructions this body may spawn (its own name is implied).
    pub calls: Vec<String>,
    /// Set when the body may spawn a routine received as a value, which
    /// makes the callee set unknowable at registration; such instructions
    /// are treated as unmemoizable and their dynamic spawns are checked at
    /// spawn time instead.
    pub dynamic_calls: bool,
}

impl Prototype {
    pub fn new(name: impl Into<String>) -> Prototype {
        Prototype {
            name: name.into(),
            params: Vec::new(),
            nonlocals: Vec::new(),
            calls: Vec::new(),
            dynamic_calls: false,
        }
    }
    pub fn param(mut self, p: Param) -> Prototype {
        self.params.push(p);
        self
    }
    pub fn params(mut self, ps: impl IntoIterator<Item = Param>) -> Prototype {
        self.params.extend(ps);
        self
    }
    pub fn nonlocal(mut self, n: NonlocalRef) -> Prototype {
        self.nonlocals.push(n);
        self
    }
    pub fn reads_cell(mut self, c: CellId) -> Prototype {
        self.nonlocals
            .push(NonlocalRef::Cell(c, crate::nonlocal::Access::Read));
        self
    }
    pub fn writes_cell(mut self, c: CellId) -> Prototype {
        self.nonlocals
            .push(NonlocalRef::Cell(c, crate::nonlocal::Access::Write));
        self
    }
    pub fn calls(mut self, names: &[&str]) -> Prototype {
        self.calls.extend(names.iter().map(|s| s.to_string()));
        self
    }
    pub fn dynamic(mut self) -> Prototype {
        self.dynamic_calls = true;
        self
    }
}

/// What a curried argument supplies to the target instruction.
#[derive(Debug, Clone)]
pub enum CurryArg {
    /// Forward the caller's parameter at this position.
    Param(usize),
    /// A fixed value.
    Lit(Value),
    /// A fixed item (captured from the currying task's scope).
    Item(crate::pool::ItemId),
    /// Read the current version of a captured inout chain.
    Chain(ChainId),
    /// Advance a captured chain: supply a fresh item as the out binding and
    /// make it the chain's new current version. Writing state this way
    /// serializes operations on an instance through ordinary dataflow.
    ChainNext(ChainId),
}

pub type HostFn = Arc<dyn Fn(&mut crate::pool::TaskCtx<'_>) -> crate::pool::BodyResult>;

#[derive(Clone)]
pub enum InstrBody {
    Host(HostFn),
    /// Expansion: spawn `target` with the given argument mapping.
    Curry { target: InstrId, args: Vec<CurryArg> },
}

impl std::fmt::Debug for InstrBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstrBody::Host(_) => write!(f, "Host(..)"),
            InstrBody::Curry { target, args } => {
                write!(f, "Curry(target={target}, args={})", args.len())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instruction {
    pub proto: Prototype,
    pub body: InstrBody,
    /// Declared-and-propagated purity: no nonlocal touches anywhere in the
    /// callee closure. Impure instructions are always demanded, never
    /// memoized, never cancelled.
    pub pure: bool,
    /// Pure but stateful-through-chains or dynamically-calling instructions
    /// are excluded from memoization separately.
    pub memoizable: bool,
    /// Every cell in the callee closure's declared touch set.
    pub may_touch: Vec<CellId>,
    /// Down-cell snapshots pinned when a routine value was created while
    /// passing this routine around; None for ordinary instructions.
    pub down_pins: Vec<(CellId, Value)>,
}

use serde::{Deserialize, Serialize};

/// How a parameter binds to an item.
///
/// An inout is a version pair: the body reads the in side and resolves a
/// fresh out side, so items stay single-assignment while the variable
/// advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    In,
    InOut,
    Out,
}

/// Priority expression attached by `promise(expr)`. Evaluated once, at spawn,
/// from the task's already-evaluated ins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PromiseSpec {
    /// Promise is the value of in-parameter `p`.
    In(usize),
    /// Promise is the negated value of in-parameter `p` (e.g. -heuristic).
    NegIn(usize),
    Const(f64),
}

/// Per-item use declaration: which of delegate / evaluate / ignore the task
/// may do with the item, plus the default-candidate, indeterminacy and
/// promise modifiers. Exactly the seven non-empty subsets of {del, eva, ign}
/// are legal modes; the unspecified default is del_eva.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UseDecl {
    pub del: bool,
    pub eva: bool,
    pub ign: bool,
    /// Candidate runs only if every non-default candidate for the out has
    /// terminated having ignored it.
    pub default_candidate: bool,
    /// The program accepts any one of the candidate definitions.
    pub indet: bool,
    pub promise: Option<PromiseSpec>,
}

impl UseDecl {
    const fn base(del: bool, eva: bool, ign: bool) -> UseDecl {
        UseDecl {
            del,
            eva,
            ign,
            default_candidate: false,
            indet: false,
            promise: None,
        }
    }

    pub const fn del() -> UseDecl {
        UseDecl::base(true, false, false)
    }
    pub const fn eva() -> UseDecl {
        UseDecl::base(false, true, false)
    }
    pub const fn ign() -> UseDecl {
        UseDecl::base(false, false, true)
    }
    pub const fn del_eva() -> UseDecl {
        UseDecl::base(true, true, false)
    }
    pub const fn del_ign() -> UseDecl {
        UseDecl::base(true, false, true)
    }
    pub const fn eva_ign() -> UseDecl {
        UseDecl::base(false, true, true)
    }
    pub const fn del_eva_ign() -> UseDecl {
        UseDecl::base(true, true, true)
    }

    pub const fn with_default(mut self) -> UseDecl {
        self.default_candidate = true;
        self
    }
    pub const fn with_indet(mut self) -> UseDecl {
        self.indet = true;
        self
    }
    pub const fn with_promise(mut self, p: PromiseSpec) -> UseDecl {
        self.promise = Some(p);
        self
    }

    /// True when the declaration is one of the seven legal modes.
    pub fn is_legal(&self) -> bool {
        self.del || self.eva || self.ign
    }

    /// A strict in: the task will evaluate the item, so readiness requires it
    /// resolved. Conditional (ign-bearing) ins never gate readiness.
    pub fn is_strict_in(&self) -> bool {
        self.eva && !self.ign
    }

    /// A conditional use: the task may end up ignoring the item.
    pub fn is_conditional(&self) -> bool {
        self.ign
    }

    pub fn mode_name(&self) -> &'static str {
        match (self.del, self.eva, self.ign) {
            (true, false, false) => "del",
            (false, true, false) => "eva",
            (false, false, true) => "ign",
            (true, true, false) => "del_eva",
            (true, false, true) => "del_ign",
            (false, true, true) => "eva_ign",
            (true, true, true) => "del_eva_ign",
            (false, false, false) => "none",
        }
    }

    pub fn all_modes() -> [UseDecl; 7] {
        [
            UseDecl::del(),
            UseDecl::eva(),
            UseDecl::ign(),
            UseDecl::del_eva(),
            UseDecl::del_ign(),
            UseDecl::eva_ign(),
            UseDecl::del_eva_ign(),
        ]
    }
}

impl Default for UseDecl {
    /// The unstated declaration: the task may delegate or evaluate.
    fn default() -> Self {
        UseDecl::del_eva()
    }
}

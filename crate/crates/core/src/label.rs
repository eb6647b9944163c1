use serde::{Deserialize, Serialize};

/// Hierarchical sequence label: the ordinal path from the root of the spawn
/// tree. Child labels extend the parent's label by the child's spawn ordinal,
/// so lexicographic order on labels is depth-first program order. Labels are
/// interned in an arena; a task stores one small id no matter how deep the
/// replacement chain grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeqLabel(pub u32);

pub const ROOT_LABEL: SeqLabel = SeqLabel(0);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelNode {
    parent: u32,
    ordinal: u32,
    depth: u32,
}

/// Arena of labels. Node 0 is the root (the application itself).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelArena {
    nodes: Vec<LabelNode>,
}

impl Default for LabelArena {
    fn default() -> Self {
        Self::new()
    }
}

impl LabelArena {
    pub fn new() -> Self {
        LabelArena {
            nodes: vec![LabelNode {
                parent: 0,
                ordinal: 0,
                depth: 0,
            }],
        }
    }

    pub fn child(&mut self, parent: SeqLabel, ordinal: u32) -> SeqLabel {
        let depth = self.nodes[parent.0 as usize].depth + 1;
        self.nodes.push(LabelNode {
            parent: parent.0,
            ordinal,
            depth,
        });
        SeqLabel((self.nodes.len() - 1) as u32)
    }

    pub fn depth(&self, l: SeqLabel) -> u32 {
        self.nodes[l.0 as usize].depth
    }

    pub fn ordinal(&self, l: SeqLabel) -> u32 {
        self.nodes[l.0 as usize].ordinal
    }

    pub fn parent(&self, l: SeqLabel) -> Option<SeqLabel> {
        if l.0 == 0 {
            None
        } else {
            Some(SeqLabel(self.nodes[l.0 as usize].parent))
        }
    }

    /// Ordinal path from the root, e.g. [2, 1, 3].
    pub fn path(&self, l: SeqLabel) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes[l.0 as usize].depth as usize);
        let mut cur = l.0;
        while cur != 0 {
            let n = &self.nodes[cur as usize];
            out.push(n.ordinal);
            cur = n.parent;
        }
        out.reverse();
        out
    }

    /// Dot-joined ordinal path; the root displays as "0".
    pub fn display(&self, l: SeqLabel) -> String {
        if l.0 == 0 {
            return "0".to_string();
        }
        let path = self.path(l);
        let mut s = String::new();
        for (i, p) in path.iter().enumerate() {
            if i > 0 {
                s.push('.');
            }
            s.push_str(&p.to_string());
        }
        s
    }

    /// Lexicographic comparison of ordinal paths = program order.
    /// A parent precedes all of its descendants.
    pub fn cmp(&self, a: SeqLabel, b: SeqLabel) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        if a == b {
            return Ordering::Equal;
        }
        // Walk both up to equal depth, remembering the last ordinal stepped
        // over; then walk in lockstep to the common ancestor.
        let mut x = a.0;
        let mut y = b.0;
        let mut dx = self.nodes[x as usize].depth;
        let mut dy = self.nodes[y as usize].depth;
        // Ordinal of the child on each side just below the meeting point.
        let mut ox = 0u32;
        let mut oy = 0u32;
        let mut x_descended = false;
        let mut y_descended = false;
        while dx > dy {
            ox = self.nodes[x as usize].ordinal;
            x = self.nodes[x as usize].parent;
            dx -= 1;
            x_descended = true;
        }
        while dy > dx {
            oy = self.nodes[y as usize].ordinal;
            y = self.nodes[y as usize].parent;
            dy -= 1;
            y_descended = true;
        }
        while x != y {
            ox = self.nodes[x as usize].ordinal;
            oy = self.nodes[y as usize].ordinal;
            x = self.nodes[x as usize].parent;
            y = self.nodes[y as usize].parent;
            x_descended = true;
            y_descended = true;
        }
        match (x_descended, y_descended) {
            // a is an ancestor of b: a first.
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            _ => ox.cmp(&oy),
        }
    }

    /// True when `anc` is `l` itself or a proper ancestor of `l`.
    pub fn is_ancestor(&self, anc: SeqLabel, l: SeqLabel) -> bool {
        let mut cur = l.0;
        loop {
            if cur == anc.0 {
                return true;
            }
            if cur == 0 {
                return false;
            }
            cur = self.nodes[cur as usize].parent;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

use std::fmt::Write as _;

/// Journal event kinds, one line per event. Steps count Exec events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Exec,
    Spawn,
    Evaluate,
    Alias,
    Cancel,
    MemoHit,
    FenceWait,
    Steal,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Exec => "Exec",
            EventKind::Spawn => "Spawn",
            EventKind::Evaluate => "Evaluate",
            EventKind::Alias => "Alias",
            EventKind::Cancel => "Cancel",
            EventKind::MemoHit => "MemoHit",
            EventKind::FenceWait => "FenceWait",
            EventKind::Steal => "Steal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    pub label: String,
    pub instr: String,
    pub args: String,
}

impl Event {
    /// Tab-separated stable five-field line.
    pub fn line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            self.step,
            self.kind.name(),
            self.label,
            self.instr,
            self.args
        );
        s
    }
}

#[derive(Debug, Default)]
pub struct Journal {
    pub events: Vec<Event>,
}

impl Journal {
    pub fn push(&mut self, ev: Event) {
        self.events.push(ev);
    }

    pub fn count(&self, kind: EventKind) -> u64 {
        self.events.iter().filter(|e| e.kind == kind).count() as u64
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }
}

/// Totals the engine maintains as it runs; tests reconcile these against
/// the journal.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub spawned: u64,
    pub evaluations: u64,
    pub aliases: u64,
    pub cancelled: u64,
    pub memo_hits: u64,
    pub fence_waits: u64,
    pub steals: u64,
    pub peak_pool: u64,
    pub inline_runs: u64,
    pub discarded_writes: u64,
}

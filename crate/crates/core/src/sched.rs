use crate::item::TaskId;
use crate::lcg::Lcg;
use std::collections::VecDeque;

/// Task-order axis: depth-first stack, breadth-first queue, or per-worker
/// deques with stealing. Order is over pool-entry sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Lifo,
    Fifo,
    WorkStealing { workers: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drive {
    Supply,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromiseMode {
    Off,
    /// Priority by promise, ties by pool-entry order.
    Heuristic,
    /// Global priority queue: max promise first, ties by program order
    /// (lowest sequence label). Total order makes best-first searches
    /// reproduce their textbook traces.
    Strict,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub order: Order,
    pub drive: Drive,
    /// Max admitted speculation depth; None = unbounded.
    pub spec_limit: Option<u32>,
    pub promise: PromiseMode,
    /// Self-recursion inline budget per task chain; 1 = no inlining.
    pub maxunrl: u32,
    pub seed: i64,
    /// Replay scheduling: follow a recorded label sequence.
    pub script: Option<Vec<String>>,
}

impl Default for Policy {
    fn default() -> Policy {
        Policy {
            order: Order::WorkStealing { workers: 1 },
            drive: Drive::Supply,
            spec_limit: None,
            promise: PromiseMode::Off,
            maxunrl: 1,
            seed: 12345,
            script: None,
        }
    }
}

impl Policy {
    pub fn lifo() -> Policy {
        Policy {
            order: Order::Lifo,
            ..Policy::default()
        }
    }
    pub fn fifo() -> Policy {
        Policy {
            order: Order::Fifo,
            ..Policy::default()
        }
    }
    pub fn stealing(workers: u32) -> Policy {
        Policy {
            order: Order::WorkStealing { workers },
            ..Policy::default()
        }
    }
    pub fn demand(mut self) -> Policy {
        self.drive = Drive::Demand;
        self
    }
    pub fn with_spec_limit(mut self, l: u32) -> Policy {
        self.spec_limit = Some(l);
        self
    }
    pub fn with_promise(mut self, m: PromiseMode) -> Policy {
        self.promise = m;
        self
    }
    pub fn with_maxunrl(mut self, m: u32) -> Policy {
        self.maxunrl = m.max(1);
        self
    }
    pub fn with_seed(mut self, s: i64) -> Policy {
        self.seed = s;
        self
    }

    pub fn workers(&self) -> u32 {
        match self.order {
            Order::WorkStealing { workers } => workers.max(1),
            _ => 1,
        }
    }

    /// Depth bound a task must satisfy to be admitted. None = admit all.
    pub fn admission_limit(&self) -> Option<u32> {
        match self.drive {
            Drive::Supply => self.spec_limit,
            Drive::Demand => Some(self.spec_limit.unwrap_or(0)),
        }
    }
}

/// Entry in a scheduling structure. Promise queues carry (promise, tie
/// key); deques carry pool-entry order implicitly.
#[derive(Debug, Clone)]
pub struct SchedEntry {
    pub task: TaskId,
    pub spawn_seq: u64,
    /// Label path, used for strict-promise tie-breaks.
    pub label_path: Vec<u32>,
    pub promise: f64,
}

/// The runnable-task structures. Entries may go stale (task cancelled or
/// re-blocked after enqueue); the pool re-validates at pop.
#[derive(Debug)]
pub struct Scheduler {
    pub policy: Policy,
    /// Lifo/Fifo share one global deque; stealing uses one per worker.
    pub deques: Vec<VecDeque<SchedEntry>>,
    /// Promise-mode priority heap, kept sorted lazily (binary heap over
    /// ordered keys).
    pub heap: Vec<SchedEntry>,
    pub turn: u32,
    pub rng: Lcg,
    pub yield_flag: bool,
    pub steals: u64,
}

impl Scheduler {
    pub fn new(policy: Policy) -> Scheduler {
        let lanes = match policy.order {
            Order::WorkStealing { workers } => workers.max(1) as usize,
            _ => 1,
        };
        let rng = Lcg::new(policy.seed);
        Scheduler {
            policy,
            deques: vec![VecDeque::new(); lanes],
            heap: Vec::new(),
            turn: 0,
            rng,
            yield_flag: false,
            steals: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty() && self.deques.iter().all(|d| d.is_empty())
    }

    pub fn pending_entries(&self) -> usize {
        self.heap.len() + self.deques.iter().map(|d| d.len()).sum::<usize>()
    }

    /// Push a runnable task. `home` is the worker whose turn produced it.
    pub fn push(&mut self, e: SchedEntry, home: u32) {
        if self.policy.promise != PromiseMode::Off {
            let idx = self
                .heap
                .binary_search_by(|probe| heap_key_cmp(probe, &e, self.policy.promise))
                .unwrap_or_else(|i| i);
            self.heap.insert(idx, e);
            return;
        }
        let lane = (home as usize) % self.deques.len();
        self.deques[lane].push_back(e);
    }

    /// Pop the next candidate under the policy order, also reporting the
    /// worker that takes it and whether it was stolen.
    pub fn pop(&mut self) -> Option<(SchedEntry, u32, bool)> {
        if self.policy.promise != PromiseMode::Off {
            return self.heap.pop().map(|e| (e, 0, false));
        }
        match self.policy.order {
            Order::Lifo => self.deques[0].pop_back().map(|e| (e, 0, false)),
            Order::Fifo => self.deques[0].pop_front().map(|e| (e, 0, false)),
            Order::WorkStealing { workers } => {
                let w = workers.max(1);
                // Round-robin turns over virtual workers; each takes from
                // its own back end, stealing from a seeded victim's front
                // end when empty.
                for _ in 0..w {
                    let me = self.turn % w;
                    self.turn = (self.turn + 1) % w;
                    if let Some(e) = self.deques[me as usize].pop_back() {
                        return Some((e, me, false));
                    }
                    if let Some((e, _victim)) = self.try_steal(me) {
                        // A successful steal means some worker starved:
                        // ask inlining tasks to start yielding spawns.
                        self.yield_flag = true;
                        return Some((e, me, true));
                    }
                }
                None
            }
        }
    }

    fn try_steal(&mut self, thief: u32) -> Option<(SchedEntry, u32)> {
        let w = self.deques.len() as u32;
        if w <= 1 {
            return None;
        }
        // Seeded uniform victim choice, then sweep for a non-empty one.
        let start = self.rng.next_below(w as usize) as u32;
        for k in 0..w {
            let victim = (start + k) % w;
            if victim == thief {
                continue;
            }
            if let Some(e) = self.deques[victim as usize].pop_front() {
                self.steals += 1;
                return Some((e, victim));
            }
        }
        None
    }

    /// Minimum pool-entry sequence over a victim's deque, for the
    /// steal-end invariant check.
    pub fn victim_min_seq(&self, victim: u32) -> Option<u64> {
        self.deques
            .get(victim as usize)
            .and_then(|d| d.iter().map(|e| e.spawn_seq).min())
    }
}

/// Sort key so that `heap.pop()` (max end) yields the scheduled task:
/// higher promise later in the vec; among equal promises the tie winner
/// goes last. Ties break toward program order (min label) under Strict and
/// pool-entry order (min spawn sequence) under Heuristic.
fn heap_key_cmp(a: &SchedEntry, b: &SchedEntry, mode: PromiseMode) -> std::cmp::Ordering {
    let pa = a.promise;
    let pb = b.promise;
    let prom = pa.partial_cmp(&pb).unwrap_or(std::cmp::Ordering::Equal);
    if prom != std::cmp::Ordering::Equal {
        return prom;
    }
    match mode {
        PromiseMode::Strict => b.label_path.cmp(&a.label_path),
        _ => b.spawn_seq.cmp(&a.spawn_seq),
    }
}

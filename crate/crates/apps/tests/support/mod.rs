//! Independent oracles that the example-program tests compare against.
//! Everything here is a direct sequential implementation with no dependency
//! on the task-pool runtime, so a disagreement always indicts the runtime
//! (or the program), never the expectation.
#![allow(dead_code)]

/// Fixed generator for seeded test data. Same recurrence the runtime pins:
/// seed' = (1103515245*seed + 12345) mod 2^31.
pub struct OracleLcg {
    pub seed: i64,
}

impl OracleLcg {
    pub fn new(seed: i64) -> Self {
        OracleLcg {
            seed: seed.rem_euclid(1 << 31),
        }
    }
    pub fn next_seed(&mut self) -> i64 {
        self.seed = (1103515245i64.wrapping_mul(self.seed) + 12345).rem_euclid(1 << 31);
        self.seed
    }
    pub fn next_real(&mut self) -> f64 {
        self.next_seed() as f64 / (1i64 << 31) as f64
    }
    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.next_seed() % (hi - lo + 1)
    }
}

// ---------------------------------------------------------------- addtorial

pub fn addtorial_formula(n: i64) -> i64 {
    n * (n + 1) / 2
}

// ----------------------------------------------------------------- n-queens

/// Row-by-row backtracking count. Board is a vector of column values, one
/// per row; a new value is unsafe against row k (1-based, distance
/// size+1-k) if equal or on a shared diagonal.
pub fn nqueens_count(n: usize) -> usize {
    fn go(board: &mut Vec<i64>, n: usize) -> usize {
        if board.len() == n {
            return 1;
        }
        let mut total = 0;
        for cand in 1..=n as i64 {
            if safe(board, cand) {
                board.push(cand);
                total += go(board, n);
                board.pop();
            }
        }
        total
    }
    go(&mut Vec::new(), n)
}

pub fn nq_safe(board: &[i64], cand: i64) -> bool {
    safe(board, cand)
}

fn safe(board: &[i64], cand: i64) -> bool {
    let size = board.len() as i64;
    for (k, &b) in board.iter().enumerate() {
        let k = k as i64 + 1;
        if b == cand || (b - cand).abs() == (size + 1 - k) {
            return false;
        }
    }
    true
}

/// First solution in depth-first order with candidate values tried in
/// ascending order; None when no solution exists.
pub fn nqueens_first(n: usize) -> Option<Vec<i64>> {
    fn go(board: &mut Vec<i64>, n: usize) -> bool {
        if board.len() == n {
            return true;
        }
        for cand in 1..=n as i64 {
            if safe(board, cand) {
                board.push(cand);
                if go(board, n) {
                    return true;
                }
                board.pop();
            }
        }
        false
    }
    let mut b = Vec::new();
    if go(&mut b, n) {
        Some(b)
    } else {
        None
    }
}

// -------------------------------------------------------------- 8-puzzle

/// 3x3 sliding puzzle state, row-major, 0 = blank.
pub type PuzzleBoard = [u8; 9];

pub const PUZZLE_START: PuzzleBoard = [8, 7, 6, 0, 4, 1, 2, 5, 3];
pub const PUZZLE_GOAL: PuzzleBoard = [0, 1, 2, 3, 4, 5, 6, 7, 8];

/// Move names in the encoding order a = -2, -1, +1, +2.
pub const PUZZLE_DIRS: [(i8, &str); 4] = [(-2, "UP"), (-1, "RIGHT"), (1, "LEFT"), (2, "DOWN")];

fn blank_pos(b: &PuzzleBoard) -> usize {
    b.iter().position(|&t| t == 0).unwrap()
}

/// Apply move `a` (blank moves UP/RIGHT/LEFT/DOWN for -2/-1/+1/+2).
/// Returns None when the move is illegal from this state.
pub fn puzzle_apply(b: &PuzzleBoard, a: i8) -> Option<PuzzleBoard> {
    let p = blank_pos(b);
    let (r, c) = (p / 3, p % 3);
    let q = match a {
        -2 if r > 0 => p - 3,
        2 if r < 2 => p + 3,
        1 if c > 0 => p - 1,
        -1 if c < 2 => p + 1,
        _ => return None,
    };
    let mut nb = *b;
    nb.swap(p, q);
    Some(nb)
}

/// Manhattan distance to the goal over tiles 1..8; the blank is excluded.
pub fn puzzle_manhattan(b: &PuzzleBoard) -> i64 {
    let mut d = 0i64;
    for (i, &t) in b.iter().enumerate() {
        if t == 0 {
            continue;
        }
        let (r, c) = (i as i64 / 3, i as i64 % 3);
        let (gr, gc) = (t as i64 / 3, t as i64 % 3);
        d += (r - gr).abs() + (c - gc).abs();
    }
    d
}

fn encode(b: &PuzzleBoard) -> u32 {
    b.iter().fold(0u32, |acc, &t| acc * 9 + t as u32)
}

/// Breadth-first minimal move count; None if unreachable.
pub fn puzzle_bfs_optimal(start: &PuzzleBoard, goal: &PuzzleBoard) -> Option<usize> {
    use std::collections::{HashMap, VecDeque};
    let mut seen: HashMap<u32, usize> = HashMap::new();
    let mut q = VecDeque::new();
    seen.insert(encode(start), 0);
    q.push_back(*start);
    while let Some(b) = q.pop_front() {
        let d = seen[&encode(&b)];
        if b == *goal {
            return Some(d);
        }
        for (a, _) in PUZZLE_DIRS {
            if let Some(nb) = puzzle_apply(&b, a) {
                seen.entry(encode(&nb)).or_insert_with(|| {
                    q.push_back(nb);
                    d + 1
                });
            }
        }
    }
    None
}

/// Direct best-first search mirroring the example program's shape: each
/// queue entry is one pending move application carrying the parent's
/// heuristic (depth + manhattan) as its priority; ties pop in program order
/// (lexicographic seq label); children are generated for a = -2..2 skipping
/// 0 and the reverse of the move just made; anything with heuristic >
/// maxdepth is abandoned. Returns the move-name list of the first goal
/// reached. With this tie rule the result coincides with the bounded
/// depth-first search over the same child order.
pub fn puzzle_astar_moves(
    start: &PuzzleBoard,
    goal: &PuzzleBoard,
    maxdepth: i64,
) -> Option<Vec<&'static str>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    struct Node {
        board: PuzzleBoard,
        depth: i64,
        moves: Vec<&'static str>,
        last_a: i8,
        label: Vec<u16>,
    }
    let mut heap: BinaryHeap<Reverse<(i64, Vec<u16>, usize)>> = BinaryHeap::new();
    let mut nodes: Vec<Node> = Vec::new();
    nodes.push(Node {
        board: *start,
        depth: 0,
        moves: Vec::new(),
        last_a: 0,
        label: Vec::new(),
    });
    heap.push(Reverse((0, Vec::new(), 0)));
    while let Some(Reverse((_prio, _label, id))) = heap.pop() {
        let (board, depth, moves, last_a, label) = {
            let n = &nodes[id];
            (n.board, n.depth, n.moves.clone(), n.last_a, n.label.clone())
        };
        let dist = {
            let mut d = 0i64;
            for (i, &t) in board.iter().enumerate() {
                if t == 0 {
                    continue;
                }
                let gp = goal.iter().position(|&g| g == t).unwrap() as i64;
                d += (i as i64 / 3 - gp / 3).abs() + (i as i64 % 3 - gp % 3).abs();
            }
            d
        };
        if dist == 0 {
            return Some(moves);
        }
        let heuristic = dist + depth;
        if heuristic > maxdepth {
            continue;
        }
        let mut ordinal = 0u16;
        for (a, name) in PUZZLE_DIRS {
            if a == -last_a {
                continue;
            }
            if let Some(nb) = puzzle_apply(&board, a) {
                let mut nm = moves.clone();
                nm.push(name);
                ordinal += 1;
                let mut nl = label.clone();
                nl.push(ordinal);
                nodes.push(Node {
                    board: nb,
                    depth: depth + 1,
                    moves: nm,
                    last_a: a,
                    label: nl.clone(),
                });
                heap.push(Reverse((heuristic, nl, nodes.len() - 1)));
            }
        }
    }
    None
}

/// Bounded depth-first search with the same pruning and child order; the
/// pinned printed solution is this search's first hit.
pub fn puzzle_dfs_moves(
    start: &PuzzleBoard,
    maxdepth: i64,
) -> Option<Vec<&'static str>> {
    fn go(b: PuzzleBoard, depth: i64, moves: &mut Vec<&'static str>, last_a: i8, maxdepth: i64) -> bool {
        let dist = puzzle_manhattan(&b);
        if dist == 0 {
            return true;
        }
        if dist + depth > maxdepth {
            return false;
        }
        for (a, name) in PUZZLE_DIRS {
            if a == -last_a {
                continue;
            }
            if let Some(nb) = puzzle_apply(&b, a) {
                moves.push(name);
                if go(nb, depth + 1, moves, a, maxdepth) {
                    return true;
                }
                moves.pop();
            }
        }
        false
    }
    let mut m = Vec::new();
    if go(*start, 0, &mut m, 0, maxdepth) {
        Some(m)
    } else {
        None
    }
}

// ------------------------------------------------------------- numerics

/// Square-root iteration: x_{k+1} = (x_k + n/x_k)/2 from x_0 = a0; stop at
/// the first |x_k - x_{k+1}| < eps and return (x_{k+1}, comparisons).
pub fn newton_sqrt_oracle(n: f64, a0: f64, eps: f64) -> (f64, usize) {
    let mut x = a0;
    let mut comparisons = 0;
    loop {
        let next = (x + n / x) / 2.0;
        comparisons += 1;
        if (x - next).abs() < eps {
            return (next, comparisons);
        }
        x = next;
    }
}

pub fn easydiff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x)) / h
}

/// First-order numerical differentiation with interval halving; returns
/// (result, within-comparisons).
pub fn numdiff_loop_oracle(f: impl Fn(f64) -> f64 + Copy, x: f64, h0: f64, eps: f64) -> (f64, usize) {
    let mut h = h0;
    let mut a = easydiff(f, x, h);
    let mut comparisons = 0;
    loop {
        h /= 2.0;
        let next = easydiff(f, x, h);
        comparisons += 1;
        if (a - next).abs() < eps {
            return (next, comparisons);
        }
        a = next;
    }
}

/// One elimination step over a sequence of approximations with halving h:
/// the order of the dominant error term is estimated from three successive
/// values, then eliminated. Degenerate estimates (zero denominators,
/// non-positive ratio) emit the unimproved middle term.
pub fn improve_seq(y: &[f64]) -> Vec<f64> {
    let mut z = Vec::new();
    for i in 0..y.len().saturating_sub(2) {
        z.push(improve_term(y[i], y[i + 1], y[i + 2]));
    }
    z
}

pub fn improve_term(y0: f64, y1: f64, y2: f64) -> f64 {
    if y1 == y2 {
        return y1;
    }
    let ratio = (y0 - y2) / (y1 - y2) - 1.0;
    if !(ratio > 0.0) {
        return y1;
    }
    let n = (ratio.ln() / 2f64.ln()).round();
    let p = 2f64.powf(n);
    if (p - 1.0).abs() < 1e-300 {
        return y1;
    }
    (y1 * p - y0) / (p - 1.0)
}

/// Differentiation through `improves` elimination passes; returns
/// (result, within-comparisons at the final level).
pub fn numdiff_improved_oracle(
    f: impl Fn(f64) -> f64 + Copy,
    x: f64,
    h0: f64,
    eps: f64,
    improves: usize,
) -> (f64, usize) {
    // Generate y lazily enough for the needed depth: term k of the final
    // level needs y up to k + 2*improves.
    let y_at = |k: usize| -> f64 { easydiff(f, x, h0 / 2f64.powi(k as i32)) };
    let mut comparisons = 0;
    let mut k = 0usize;
    loop {
        let need = k + 1 + 2 * improves + 1;
        let mut level: Vec<f64> = (0..=need).map(y_at).collect();
        for _ in 0..improves {
            level = improve_seq(&level);
        }
        comparisons += 1;
        if (level[k] - level[k + 1]).abs() < eps {
            return (level[k + 1], comparisons);
        }
        k += 1;
    }
}

/// The repeated-elimination scheme: level 0 is the raw difference-quotient
/// stream, each next level eliminates the dominant error term of the one
/// below, and the answer walks the second term of each order until two
/// successive orders agree within eps.
pub fn numdiff_super_oracle(f: impl Fn(f64) -> f64 + Copy, x: f64, h0: f64, eps: f64) -> (f64, usize) {
    let y_at = |k: usize| -> f64 { easydiff(f, x, h0 / 2f64.powi(k as i32)) };
    let mut comparisons = 0;
    let mut order = 0usize;
    let mut prev: Option<f64> = None;
    loop {
        // s[1, order]: second element of the given order's sequence.
        let need = 1 + 2 * order + 1;
        let mut level: Vec<f64> = (0..=need).map(y_at).collect();
        for _ in 0..order {
            level = improve_seq(&level);
        }
        let cur = level[1];
        if let Some(p) = prev {
            comparisons += 1;
            if (p - cur).abs() < eps {
                return (cur, comparisons);
            }
        }
        prev = Some(cur);
        order += 1;
    }
}

// ---------------------------------------------------------------- jacobi

/// Simultaneous-update relaxation on a 1-D rod with fixed ends; returns the
/// final array, final residual e, and relax steps taken. Iterates while
/// e >= emax with a step budget.
pub fn jacobi_oracle(n: usize, emax: f64, imax: i64, step: usize) -> (Vec<f64>, f64, i64) {
    let mut a = vec![0.0; n + 1]; // 1-based
    a[1] = 1.0;
    a[n] = n as f64;
    let mut e = 2.0 * emax;
    let mut budget = imax;
    let mut steps = 0i64;
    loop {
        if e < emax {
            break;
        }
        budget -= step as i64;
        if budget < 0 {
            break;
        }
        let mut last = a.clone();
        for _ in 0..step {
            let mut b = last.clone();
            for i in 2..n {
                b[i] = (last[i - 1] + last[i + 1]) / 2.0;
            }
            // Residual of the most recent step.
            e = (2..n)
                .map(|i| (b[i] - last[i]).abs())
                .fold(0.0f64, f64::max);
            last = b;
            steps += 1;
        }
        a = last;
    }
    (a, e, steps)
}

// ------------------------------------------------------------------ sort

/// Rotate a 1-based slice of length n right by cc: the element at position
/// i lands at position mod(i-1+cc, n)+1.
pub fn rcycle_oracle<T: Clone>(v: &[T], cc: usize) -> Vec<T> {
    let n = v.len();
    let mut out = v.to_vec();
    for i in 0..n {
        out[(i + cc) % n] = v[i].clone();
    }
    out
}

pub fn seeded_array(seed: i64, len: usize, lo: i64, hi: i64) -> Vec<i64> {
    let mut g = OracleLcg::new(seed);
    (0..len).map(|_| g.int_in(lo, hi)).collect()
}

pub fn host_sorted(v: &[i64]) -> Vec<i64> {
    let mut s = v.to_vec();
    s.sort();
    s
}

/// Sorted by a comparison key; stable, used for comparator-configured sorts.
pub fn host_sorted_by_key(v: &[i64], key: impl Fn(i64) -> i64) -> Vec<i64> {
    let mut s = v.to_vec();
    s.sort_by_key(|&x| key(x));
    s
}

// -------------------------------------------------------------- searching

/// a[j] = 2j for j = 1..n.
pub fn doubled_array(n: i64) -> Vec<i64> {
    (1..=n).map(|j| 2 * j).collect()
}

pub fn binary_search_expected(v: i64) -> i64 {
    if v % 2 == 0 && v >= 2 && v <= 200 {
        v / 2
    } else {
        -1
    }
}

// ------------------------------------------------------------------ sieve

pub fn primes_oracle(k: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(k);
    let mut cand = 2i64;
    while out.len() < k {
        if (2..cand).take_while(|d| d * d <= cand).all(|d| cand % d != 0) {
            out.push(cand);
        }
        cand += 1;
    }
    out
}

// ----------------------------------------------------------------- memo

/// Task counts for the symmetric divide-and-conquer sum over n elements:
/// leaves alias their single element; odd sizes split floor/floor with the
/// leftover folded into a second add. Returns (total_bodies, distinct_keys):
/// with memoization exactly the distinct sizes execute, without it every
/// body does.
pub fn sdc_vsum_counts(n: u64) -> (u64, u64) {
    use std::collections::BTreeSet;
    fn total(n: u64) -> u64 {
        if n <= 1 {
            1
        } else {
            1 + 2 * total(n / 2)
        }
    }
    fn sizes(n: u64, s: &mut BTreeSet<u64>) {
        s.insert(n);
        if n > 1 {
            sizes(n / 2, s);
        }
    }
    let mut s = BTreeSet::new();
    sizes(n, &mut s);
    (total(n), s.len() as u64)
}

// --------------------------------------------------------------- signal

pub fn avg_pairs_oracle(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

/// 4-for-3 rate conversion: each group of three samples is linearly
/// resampled onto four points including both endpoints.
pub fn rate43_oracle(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in xs.chunks(3) {
        if g.len() < 3 {
            break;
        }
        out.push(g[0]);
        out.push((g[0] + 2.0 * g[1]) / 3.0);
        out.push((2.0 * g[1] + g[2]) / 3.0);
        out.push(g[2]);
    }
    out
}

/// 3x3 box stencil over a stream of length-3 rows: one scalar per full
/// window, truncating when support runs out.
pub fn twodim_filter_oracle(rows: &[[f64; 3]]) -> Vec<f64> {
    rows.windows(3)
        .map(|w| w.iter().flatten().sum::<f64>() / 9.0)
        .collect()
}

//! Timeout-minimal pre-solving schedules.
//!
//! A schedule gives each algorithm a time slice; an instance counts as
//! solved when some scheduled algorithm's recorded runtime fits in its
//! slice. Among feasible schedules we pick one that
//!
//! 1. leaves the fewest training instances unsolved,
//! 2. then uses the least total time,
//! 3. then has the lexicographically least component list
//!    `[(algorithm, slice), ...]` sorted by algorithm index.
//!
//! Slices only ever need to take observed runtimes as values: any other
//! slice can shrink to the next lower observed runtime without losing an
//! instance. That makes the search space finite. With at most
//! [`EXACT_MAX_COLUMNS`] usable columns the search is exhaustive
//! (branch-and-bound); beyond that a greedy coverage-per-second
//! construction is refined by single-swap local search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Largest number of usable columns solved exactly.
pub const EXACT_MAX_COLUMNS: usize = 4;

const LOCAL_SEARCH_ROUNDS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub algorithm: usize,
    pub slice: f64,
}

/// Ordered `(algorithm, slice)` components; order is execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub components: Vec<Slot>,
}

impl Schedule {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.components.iter().map(|c| c.slice).sum()
    }

    pub fn contains(&self, algorithm: usize) -> bool {
        self.components.iter().any(|c| c.algorithm == algorithm)
    }

    /// Whether the schedule solves an instance with the given per-algorithm
    /// solve times.
    pub fn solves(&self, solve_times: &[Option<f64>]) -> bool {
        self.components
            .iter()
            .any(|c| solve_times[c.algorithm].is_some_and(|t| t <= c.slice))
    }

    pub fn unsolved(&self, solve_times: &[Vec<Option<f64>>]) -> usize {
        solve_times.iter().filter(|row| !self.solves(row)).count()
    }
}

/// Limits on the pre-solving part of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScheduleLimits {
    /// Maximum number of components; `None` is unbounded.
    pub max_components: Option<usize>,
    /// Maximum total scheduled time; `None` is unbounded.
    pub max_total_time: Option<f64>,
}

impl ScheduleLimits {
    pub const UNBOUNDED: ScheduleLimits = ScheduleLimits {
        max_components: None,
        max_total_time: None,
    };
}

/// Timeout-minimal schedule over the columns of `solve_times`
/// (`solve_times[i][a]` is `Some(t)` when algorithm `a` solves training
/// instance `i` in `t` seconds). Components come out in algorithm order.
pub fn compute_schedule(
    solve_times: &[Vec<Option<f64>>],
    budget: f64,
    limits: &ScheduleLimits,
) -> Schedule {
    let n_cols = solve_times.first().map_or(0, Vec::len);
    let problem = Problem::new(solve_times, n_cols, None, budget, limits);
    let best = problem.solve();
    problem.schedule(&best)
}

/// A pre-solving schedule computed together with a simulated selector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSchedule {
    pub presolve: Schedule,
    /// Time left to the selected algorithm: `budget - presolve total` when
    /// the optimizer gives the selector a slice, 0 when it ignores it.
    pub selector_slice: f64,
    /// Raw slice the optimizer assigned to the simulated selector.
    pub selector_raw_slice: f64,
}

/// Optimizes a schedule over the algorithms plus one extra column holding
/// the selector's estimated per-instance solve times. `limits` bound the
/// real algorithms only; the whole schedule must fit in `budget`.
pub fn compute_schedule_with_selector(
    solve_times: &[Vec<Option<f64>>],
    selector: &[Option<f64>],
    budget: f64,
    limits: &ScheduleLimits,
) -> SelectorSchedule {
    assert_eq!(solve_times.len(), selector.len(), "selector estimate must cover every instance");
    let n_cols = solve_times.first().map_or(0, Vec::len);
    let augmented: Vec<Vec<Option<f64>>> = solve_times
        .iter()
        .zip(selector)
        .map(|(row, &s)| row.iter().copied().chain(std::iter::once(s)).collect())
        .collect();
    let problem = Problem::new(&augmented, n_cols + 1, Some(n_cols), budget, limits);
    let best = problem.solve();
    let presolve = problem.schedule(&best);
    let raw = problem.free_slice(&best);
    let selector_slice = if raw > 0.0 {
        budget - presolve.total_time()
    } else {
        0.0
    };
    SelectorSchedule {
        presolve,
        selector_slice,
        selector_raw_slice: raw,
    }
}

/// Reorders components by ascending slice, ties by algorithm index.
pub fn align_schedule(schedule: &Schedule) -> Schedule {
    let mut components = schedule.components.clone();
    components.sort_by(|a, b| a.slice.total_cmp(&b.slice).then(a.algorithm.cmp(&b.algorithm)));
    Schedule { components }
}

// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn union_count(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    fn union_with(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

struct Column {
    /// Index into the caller's columns.
    id: usize,
    free: bool,
    /// Distinct usable slice values, ascending.
    cands: Vec<f64>,
    /// `cover[j]`: instances solved with slice `cands[j]`.
    cover: Vec<Bits>,
}

struct Problem {
    n: usize,
    cols: Vec<Column>,
    budget: f64,
    max_components: usize,
    max_presolve: f64,
}

/// Per-column slice (0 = unused) with its objective values.
#[derive(Clone)]
struct Candidate {
    slices: Vec<f64>,
    unsolved: usize,
    total: f64,
}

impl Problem {
    fn new(
        solve_times: &[Vec<Option<f64>>],
        n_cols: usize,
        free: Option<usize>,
        budget: f64,
        limits: &ScheduleLimits,
    ) -> Self {
        let n = solve_times.len();
        let max_components = limits.max_components.unwrap_or(usize::MAX);
        let max_presolve = limits.max_total_time.unwrap_or(f64::INFINITY);
        let mut cols = Vec::new();
        for c in 0..n_cols {
            let is_free = free == Some(c);
            if !is_free && max_components == 0 {
                continue;
            }
            let cap = if is_free { budget } else { budget.min(max_presolve) };
            let mut cands: Vec<f64> = solve_times
                .iter()
                .filter_map(|row| row[c])
                .filter(|&t| t > 0.0 && t <= cap)
                .collect();
            cands.sort_by(f64::total_cmp);
            cands.dedup();
            if cands.is_empty() {
                continue;
            }
            let cover = cands
                .iter()
                .map(|&s| {
                    let mut b = Bits::new(n);
                    for (i, row) in solve_times.iter().enumerate() {
                        if row[c].is_some_and(|t| t <= s) {
                            b.set(i);
                        }
                    }
                    b
                })
                .collect();
            cols.push(Column {
                id: c,
                free: is_free,
                cands,
                cover,
            });
        }
        Problem {
            n,
            cols,
            budget,
            max_components,
            max_presolve,
        }
    }

    fn solve(&self) -> Candidate {
        if self.cols.len() <= EXACT_MAX_COLUMNS {
            self.exact()
        } else {
            self.heuristic()
        }
    }

    fn schedule(&self, c: &Candidate) -> Schedule {
        let mut components: Vec<Slot> = self
            .cols
            .iter()
            .zip(&c.slices)
            .filter(|(col, &s)| !col.free && s > 0.0)
            .map(|(col, &s)| Slot {
                algorithm: col.id,
                slice: s,
            })
            .collect();
        components.sort_by_key(|s| s.algorithm);
        Schedule { components }
    }

    fn free_slice(&self, c: &Candidate) -> f64 {
        self.cols
            .iter()
            .zip(&c.slices)
            .find(|(col, _)| col.free)
            .map_or(0.0, |(_, &s)| s)
    }

    fn cover_of(&self, col: usize, slice: f64) -> Option<&Bits> {
        if slice <= 0.0 {
            return None;
        }
        let c = &self.cols[col];
        let j = c.cands.partition_point(|&v| v < slice);
        Some(&c.cover[j])
    }

    /// Objective values of a slice vector, or `None` if infeasible.
    fn evaluate(&self, slices: Vec<f64>) -> Option<Candidate> {
        let mut total = 0.0;
        let mut pre = 0.0;
        let mut comps = 0;
        let mut covered = Bits::new(self.n);
        for (k, &s) in slices.iter().enumerate() {
            total += s;
            if s > 0.0 {
                if !self.cols[k].free {
                    pre += s;
                    comps += 1;
                }
                covered.union_with(self.cover_of(k, s)?);
            }
        }
        if total > self.budget || pre > self.max_presolve || comps > self.max_components {
            return None;
        }
        Some(Candidate {
            slices,
            unsolved: self.n - covered.count(),
            total,
        })
    }

    /// Strict "a is preferred over b".
    fn better(&self, a: &Candidate, b: &Candidate) -> bool {
        let ord = a
            .unsolved
            .cmp(&b.unsolved)
            .then(a.total.total_cmp(&b.total))
            .then_with(|| self.lex_cmp(a, b));
        ord == Ordering::Less
    }

    fn lex_cmp(&self, a: &Candidate, b: &Candidate) -> Ordering {
        // Columns are stored in ascending id order.
        let comps = |c: &Candidate| -> Vec<(usize, f64)> {
            self.cols
                .iter()
                .zip(&c.slices)
                .filter(|(_, &s)| s > 0.0)
                .map(|(col, &s)| (col.id, s))
                .collect()
        };
        let (ca, cb) = (comps(a), comps(b));
        for (x, y) in ca.iter().zip(&cb) {
            let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1));
            if o != Ordering::Equal {
                return o;
            }
        }
        ca.len().cmp(&cb.len())
    }

    fn empty(&self) -> Candidate {
        self.evaluate(vec![0.0; self.cols.len()])
            .expect("empty schedule is feasible")
    }

    // -- exact ---------------------------------------------------------------

    fn exact(&self) -> Candidate {
        let mut best = self.empty();
        if self.cols.is_empty() {
            return best;
        }
        let mut slices = vec![0.0; self.cols.len()];
        let state = Partial {
            covered: Bits::new(self.n),
            time: 0.0,
            pre: 0.0,
            comps: 0,
        };
        self.dfs(0, &state, &mut slices, &mut best);
        best
    }

    fn fits(&self, col: usize, state: &Partial, s: f64) -> bool {
        if state.time + s > self.budget {
            return false;
        }
        if self.cols[col].free {
            return true;
        }
        state.comps < self.max_components && state.pre + s <= self.max_presolve
    }

    fn dfs(&self, col: usize, state: &Partial, slices: &mut Vec<f64>, best: &mut Candidate) {
        let column = &self.cols[col];
        let n_fit = column.cands.partition_point(|&s| self.fits(col, state, s));

        if col + 1 == self.cols.len() {
            let base = state.covered.count();
            let mut pick = 0.0;
            let mut covered = base;
            if n_fit > 0 {
                let max = state.covered.union_count(&column.cover[n_fit - 1]);
                if max > base {
                    // Coverage grows with the slice: first index reaching max.
                    let (mut lo, mut hi) = (0, n_fit - 1);
                    while lo < hi {
                        let mid = (lo + hi) / 2;
                        if state.covered.union_count(&column.cover[mid]) < max {
                            lo = mid + 1;
                        } else {
                            hi = mid;
                        }
                    }
                    let j = lo;
                    pick = column.cands[j];
                    covered = max;
                }
            }
            slices[col] = pick;
            let cand = Candidate {
                slices: slices.clone(),
                unsolved: self.n - covered,
                total: state.time + pick,
            };
            if self.better(&cand, best) {
                *best = cand;
            }
            slices[col] = 0.0;
            return;
        }

        // Bound: even the largest affordable slices of all remaining columns
        // cannot beat the incumbent.
        let mut optimistic = state.covered.clone();
        for k in col..self.cols.len() {
            let c = &self.cols[k];
            let room = self.budget - state.time;
            let j = c.cands.partition_point(|&s| s <= room);
            if j > 0 {
                optimistic.union_with(&c.cover[j - 1]);
            }
        }
        let lower = self.n - optimistic.count();
        if lower > best.unsolved || (lower == best.unsolved && state.time > best.total) {
            return;
        }

        slices[col] = 0.0;
        self.dfs(col + 1, state, slices, best);
        for j in 0..n_fit {
            let s = column.cands[j];
            let mut covered = state.covered.clone();
            covered.union_with(&column.cover[j]);
            let next = Partial {
                covered,
                time: state.time + s,
                pre: if column.free { state.pre } else { state.pre + s },
                comps: if column.free { state.comps } else { state.comps + 1 },
            };
            slices[col] = s;
            self.dfs(col + 1, &next, slices, best);
        }
        slices[col] = 0.0;
    }

    // -- heuristic -----------------------------------------------------------

    fn heuristic(&self) -> Candidate {
        let greedy = self.local_search(self.greedy());
        let single = self.local_search(self.best_single());
        if self.better(&single, &greedy) {
            single
        } else {
            greedy
        }
    }

    /// Repeatedly adds the (column, slice) step with the most newly solved
    /// instances per extra second.
    fn greedy(&self) -> Candidate {
        let mut current = self.empty();
        loop {
            let mut covered = Bits::new(self.n);
            for (k, &s) in current.slices.iter().enumerate() {
                if let Some(b) = self.cover_of(k, s) {
                    covered.union_with(b);
                }
            }
            let base = covered.count();
            // (ratio, gain, col, slice)
            let mut step: Option<(f64, usize, usize, f64)> = None;
            for (k, col) in self.cols.iter().enumerate() {
                let now = current.slices[k];
                for (j, &s) in col.cands.iter().enumerate() {
                    if s <= now {
                        continue;
                    }
                    let mut slices = current.slices.clone();
                    slices[k] = s;
                    if self.evaluate(slices).is_none() {
                        break;
                    }
                    let gain = covered.union_count(&col.cover[j]) - base;
                    if gain == 0 {
                        continue;
                    }
                    let ratio = gain as f64 / (s - now);
                    let replace = match step {
                        None => true,
                        Some((r, g, _, _)) => ratio > r || (ratio == r && gain > g),
                    };
                    if replace {
                        step = Some((ratio, gain, k, s));
                    }
                }
            }
            match step {
                Some((_, _, k, s)) => {
                    let mut slices = current.slices.clone();
                    slices[k] = s;
                    current = self.evaluate(slices).expect("checked feasible");
                }
                None => return current,
            }
        }
    }

    fn best_single(&self) -> Candidate {
        let mut best = self.empty();
        for (k, col) in self.cols.iter().enumerate() {
            for &s in &col.cands {
                let mut slices = vec![0.0; self.cols.len()];
                slices[k] = s;
                if let Some(c) = self.evaluate(slices) {
                    if self.better(&c, &best) {
                        best = c;
                    }
                }
            }
        }
        best
    }

    /// Best-improvement descent over single-slice changes (including
    /// removal) and swaps of one used column for an unused one.
    fn local_search(&self, start: Candidate) -> Candidate {
        let mut current = start;
        let m = self.cols.len();
        for _ in 0..LOCAL_SEARCH_ROUNDS {
            let mut best_move: Option<Candidate> = None;
            let consider = |slices: Vec<f64>, best_move: &mut Option<Candidate>| {
                if let Some(c) = self.evaluate(slices) {
                    let target = best_move.as_ref().unwrap_or(&current);
                    if self.better(&c, target) {
                        *best_move = Some(c);
                    }
                }
            };
            for k in 0..m {
                let options = std::iter::once(0.0).chain(self.cols[k].cands.iter().copied());
                for v in options {
                    if v == current.slices[k] {
                        continue;
                    }
                    let mut slices = current.slices.clone();
                    slices[k] = v;
                    consider(slices, &mut best_move);
                }
            }
            for k in 0..m {
                if current.slices[k] == 0.0 {
                    continue;
                }
                for k2 in 0..m {
                    if current.slices[k2] != 0.0 {
                        continue;
                    }
                    for &v in &self.cols[k2].cands {
                        let mut slices = current.slices.clone();
                        slices[k] = 0.0;
                        slices[k2] = v;
                        consider(slices, &mut best_move);
                    }
                }
            }
            match best_move {
                Some(c) => current = c,
                None => break,
            }
        }
        current
    }
}

struct Partial {
    covered: Bits,
    time: f64,
    pre: f64,
    comps: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    const TO: Option<f64> = None;

    fn slots(s: &Schedule) -> Vec<(usize, f64)> {
        s.components.iter().map(|c| (c.algorithm, c.slice)).collect()
    }

    #[test]
    fn two_complementary_algorithms() {
        let rt = vec![vec![Some(2.0), TO], vec![TO, Some(3.0)], vec![TO, TO]];
        let s = compute_schedule(&rt, 10.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(slots(&s), vec![(0, 2.0), (1, 3.0)]);
        assert_eq!(s.unsolved(&rt), 1);
    }

    #[test]
    fn budget_forces_choice_then_time_tiebreak() {
        let rt = vec![vec![Some(5.0), TO], vec![TO, Some(6.0)]];
        let s = compute_schedule(&rt, 10.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(slots(&s), vec![(0, 5.0)]);
    }

    #[test]
    fn single_algorithm_takes_max_runtime() {
        let rt = vec![vec![Some(4.0)], vec![Some(9.5)], vec![Some(1.0)]];
        let s = compute_schedule(&rt, 600.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(slots(&s), vec![(0, 9.5)]);
    }

    #[test]
    fn lexicographic_tiebreak_prefers_lower_index() {
        let rt = vec![vec![Some(5.0), Some(5.0)]];
        let s = compute_schedule(&rt, 10.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(slots(&s), vec![(0, 5.0)]);
    }

    #[test]
    fn limits_are_respected() {
        let rt = vec![
            vec![Some(1.0), TO, TO],
            vec![TO, Some(1.0), TO],
            vec![TO, TO, Some(1.0)],
        ];
        let limits = ScheduleLimits {
            max_components: Some(2),
            max_total_time: None,
        };
        assert_eq!(compute_schedule(&rt, 10.0, &limits).components.len(), 2);
        let limits = ScheduleLimits {
            max_components: None,
            max_total_time: Some(1.5),
        };
        assert_eq!(compute_schedule(&rt, 10.0, &limits).components.len(), 1);
        let limits = ScheduleLimits {
            max_components: Some(0),
            max_total_time: None,
        };
        assert!(compute_schedule(&rt, 10.0, &limits).is_empty());
    }

    #[test]
    fn perfect_selector_empties_presolve() {
        let rt = vec![
            vec![Some(1.0), Some(50.0)],
            vec![Some(80.0), Some(2.0)],
            vec![TO, Some(30.0)],
        ];
        let vbs: Vec<Option<f64>> = vec![Some(1.0), Some(2.0), Some(30.0)];
        let r = compute_schedule_with_selector(&rt, &vbs, 100.0, &ScheduleLimits::UNBOUNDED);
        assert!(r.presolve.is_empty());
        assert_eq!(r.selector_slice, 100.0);
    }

    #[test]
    fn useless_selector_is_ignored() {
        let rt = vec![
            vec![Some(1.0), Some(50.0)],
            vec![Some(80.0), Some(2.0)],
            vec![TO, Some(30.0)],
        ];
        let r = compute_schedule_with_selector(&rt, &[TO, TO, TO], 100.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(r.selector_slice, 0.0);
        assert_eq!(r.presolve, compute_schedule(&rt, 100.0, &ScheduleLimits::UNBOUNDED));
    }

    #[test]
    fn selector_shares_budget_with_presolver() {
        // The selector handles i0 and i1 within 1 s; B solves i2 and i3 in
        // 3 s. (B,3) plus a 1 s selector slice solves all four in 4 s, while
        // the best selector-free schedule {(A,2),(B,3)} needs 5 s.
        let rt = vec![
            vec![Some(1.0), TO],
            vec![Some(2.0), TO],
            vec![TO, Some(3.0)],
            vec![TO, Some(3.0)],
        ];
        let sel = vec![Some(0.5), Some(1.0), Some(400.0), TO];
        let r = compute_schedule_with_selector(&rt, &sel, 10.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(slots(&r.presolve), vec![(1, 3.0)]);
        assert_eq!(r.selector_raw_slice, 1.0);
        assert_eq!(r.selector_slice, 7.0);
    }

    #[test]
    fn align_orders_by_slice_then_index() {
        let s = Schedule {
            components: vec![
                Slot { algorithm: 0, slice: 30.0 },
                Slot { algorithm: 1, slice: 2.0 },
            ],
        };
        assert_eq!(slots(&align_schedule(&s)), vec![(1, 2.0), (0, 30.0)]);
        let s = Schedule {
            components: vec![
                Slot { algorithm: 3, slice: 5.0 },
                Slot { algorithm: 1, slice: 5.0 },
            ],
        };
        assert_eq!(slots(&align_schedule(&s)), vec![(1, 5.0), (3, 5.0)]);
        assert!(align_schedule(&Schedule::default()).is_empty());
    }

    #[test]
    fn heuristic_used_beyond_four_columns() {
        // Six algorithms, each the only solver of two instances.
        let mut rt = vec![vec![TO; 6]; 12];
        for i in 0..12 {
            rt[i][i / 2] = Some(1.0 + (i % 2) as f64);
        }
        let s = compute_schedule(&rt, 100.0, &ScheduleLimits::UNBOUNDED);
        assert_eq!(s.unsolved(&rt), 0);
        assert!((s.total_time() - 12.0).abs() < 1e-12);
    }
}

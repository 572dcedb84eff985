//! Max-NSW allocation search.
//!
//! `solve_exact` runs depth-first branch-and-bound over item-to-bundle
//! assignments in instance item order. A branch is cut when it is already
//! infeasible or when an optimistic bound (possible positive-agent count,
//! then the product of per-agent values capped by a budget-aware fractional
//! knapsack over the unassigned items) cannot beat the incumbent. Identical
//! items (same cost, same value column) are searched only in canonical
//! non-decreasing target order, which collapses the symmetric families.
//! Once the optimal value is known, a second pass rebuilds the
//! lexicographically smallest optimal assignment vector (charity before
//! agent 1 before agent 2, ...), so results are reproducible.
//!
//! `solve_local_search` is an explicitly heuristic baseline: greedy seeding
//! by density followed by hill climbing over shifts and swaps.

use num_traits::{Signed, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::audit::{audit_allocation, Alpha, AuditError, AuditReport};
use crate::model::{format_num, nsw, Allocation, Instance, ModelError, NswValue, Num};
use crate::rng::SplitMix64;

/// Default branch-and-bound node budget.
pub const DEFAULT_NODE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("node limit exceeded after {nodes} nodes")]
    NodeLimitExceeded { nodes: u64 },
    #[error("positive-count mismatch: optimum has {expected}, allocation has {actual}")]
    PositiveCountMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub allocation: Allocation,
    pub nsw: NswValue,
    /// True iff the search completed within the node limit, in which case
    /// `nsw` is the lexicographic maximum over all feasible allocations.
    pub exact: bool,
    pub nodes_explored: u64,
}

impl SolveResult {
    pub fn to_json_value(&self) -> Value {
        json!({
            "allocation": self.allocation.to_json_value(),
            "nsw": {
                "positive_count": self.nsw.positive_count,
                "product": format_num(&self.nsw.product),
            },
            "exact": self.exact,
            "nodes_explored": self.nodes_explored,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json_value()).unwrap()
    }
}

const CHARITY: u8 = 0;

struct Search<'a> {
    inst: &'a Instance,
    n: usize,
    m: usize,
    /// suffix[i][d] = agent i's value of all items with index >= d.
    suffix: Vec<Vec<Num>>,
    /// Per agent: positively-valued items sorted by density descending
    /// (zero-cost first, ties by index).
    density_order: Vec<Vec<usize>>,
    /// prev_in_class[j] = largest j' < j with identical cost and value column.
    prev_in_class: Vec<Option<usize>>,
    assignment: Vec<u8>,
    values: Vec<Num>,
    costs: Vec<Num>,
    nodes: u64,
    node_limit: u64,
    limit_hit: bool,
    best: NswValue,
    best_assignment: Vec<u8>,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, node_limit: u64) -> Self {
        let n = inst.n();
        let m = inst.m();
        let mut suffix = vec![vec![Num::zero(); m + 1]; n];
        for i in 0..n {
            for d in (0..m).rev() {
                suffix[i][d] = &suffix[i][d + 1] + inst.value(i, d);
            }
        }
        let mut density_order = Vec::with_capacity(n);
        for i in 0..n {
            let mut items: Vec<usize> =
                (0..m).filter(|&j| inst.value(i, j).is_positive()).collect();
            items.sort_by(|&a, &b| {
                let (ca, cb) = (inst.cost(a), inst.cost(b));
                match (ca.is_zero(), cb.is_zero()) {
                    (true, false) => std::cmp::Ordering::Less,
                    (false, true) => std::cmp::Ordering::Greater,
                    (true, true) => a.cmp(&b),
                    (false, false) => (inst.value(i, b) * ca)
                        .cmp(&(inst.value(i, a) * cb))
                        .then(a.cmp(&b)),
                }
            });
            density_order.push(items);
        }
        let mut prev_in_class = vec![None; m];
        for j in 0..m {
            for p in (0..j).rev() {
                if inst.cost(p) == inst.cost(j)
                    && (0..n).all(|i| inst.value(i, p) == inst.value(i, j))
                {
                    prev_in_class[j] = Some(p);
                    break;
                }
            }
        }
        Search {
            inst,
            n,
            m,
            suffix,
            density_order,
            prev_in_class,
            assignment: vec![CHARITY; m],
            values: vec![Num::zero(); n],
            costs: vec![Num::zero(); n],
            nodes: 0,
            node_limit,
            limit_hit: false,
            best: NswValue::zero(),
            best_assignment: vec![CHARITY; m],
        }
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.limit_hit = true;
        }
        self.limit_hit
    }

    fn current_nsw(&self) -> NswValue {
        let mut out = NswValue::zero();
        for v in &self.values {
            if v.is_positive() {
                out.positive_count += 1;
                out.product *= v;
            }
        }
        out
    }

    /// Budget-aware optimistic cap on agent i's final value.
    fn value_cap(&self, i: usize, depth: usize) -> Num {
        let mut cap = self.values[i].clone();
        let mut room = self.inst.budget(i) - &self.costs[i];
        for &j in &self.density_order[i] {
            if j < depth {
                continue;
            }
            let cost = self.inst.cost(j);
            if cost.is_zero() {
                cap += self.inst.value(i, j);
            } else if cost <= &room {
                room -= cost;
                cap += self.inst.value(i, j);
            } else {
                if room.is_positive() {
                    cap += self.inst.value(i, j) * &room / cost;
                }
                break;
            }
        }
        cap
    }

    /// Optimistic `(count, product)` bound for completions of this node.
    /// `cheap` uses suffix totals; the caller escalates to the fractional
    /// cap only when the cheap bound fails to prune.
    fn bound(&self, depth: usize, cheap: bool) -> NswValue {
        let mut out = NswValue::zero();
        for i in 0..self.n {
            let cap = if cheap {
                &self.values[i] + &self.suffix[i][depth]
            } else {
                self.value_cap(i, depth)
            };
            if cap.is_positive() {
                out.positive_count += 1;
                out.product *= cap;
            }
        }
        out
    }

    /// Lexicographic comparison helper: can a completion bounded by `bound`
    /// still strictly beat / exactly reach `target`?
    fn beats(bound: &NswValue, target: &NswValue) -> bool {
        bound > target
    }

    fn reaches(bound: &NswValue, target: &NswValue) -> bool {
        bound >= target
    }

    /// Phase 1: find the best achievable NSW value.
    fn search_best(&mut self, depth: usize) {
        if self.tick() {
            return;
        }
        if depth == self.m {
            let value = self.current_nsw();
            if value > self.best {
                self.best = value;
                self.best_assignment = self.assignment.clone();
            }
            return;
        }
        if !Self::beats(&self.bound(depth, true), &self.best)
            || !Self::beats(&self.bound(depth, false), &self.best)
        {
            return;
        }
        let min_target = self.min_target(depth, 0);
        for target in min_target..=self.n as u8 {
            if target != CHARITY {
                let agent = target as usize - 1;
                if self.inst.value(agent, depth).is_zero() {
                    continue; // dominated by the charity branch
                }
                if !self.fits(agent, depth) {
                    continue;
                }
                self.place(agent, depth);
                self.assignment[depth] = target;
                self.search_best(depth + 1);
                self.unplace(agent, depth);
            } else {
                self.assignment[depth] = CHARITY;
                self.search_best(depth + 1);
            }
            if self.limit_hit {
                return;
            }
        }
    }

    /// Phase 2 oracle: can the fixed prefix `0..depth` be completed to reach
    /// exactly `target`?
    fn decide(&mut self, depth: usize, target: &NswValue, region_start: usize) -> bool {
        if self.tick() {
            return false;
        }
        if depth == self.m {
            return self.current_nsw() == *target;
        }
        if !Self::reaches(&self.bound(depth, true), target)
            || !Self::reaches(&self.bound(depth, false), target)
        {
            return false;
        }
        let min_target = self.min_target(depth, region_start);
        for t in min_target..=self.n as u8 {
            if t != CHARITY {
                let agent = t as usize - 1;
                if self.inst.value(agent, depth).is_zero() {
                    continue;
                }
                if !self.fits(agent, depth) {
                    continue;
                }
                self.place(agent, depth);
                self.assignment[depth] = t;
                let ok = self.decide(depth + 1, target, region_start);
                self.unplace(agent, depth);
                if ok {
                    return true;
                }
            } else {
                self.assignment[depth] = CHARITY;
                if self.decide(depth + 1, target, region_start) {
                    return true;
                }
            }
            if self.limit_hit {
                return false;
            }
        }
        false
    }

    /// Canonical target order among identical items: copies inside the
    /// search-controlled region may only repeat or increase the target.
    fn min_target(&self, depth: usize, region_start: usize) -> u8 {
        match self.prev_in_class[depth] {
            Some(p) if p >= region_start => self.assignment[p],
            _ => CHARITY,
        }
    }

    fn fits(&self, agent: usize, item: usize) -> bool {
        &(&self.costs[agent] + self.inst.cost(item)) <= self.inst.budget(agent)
    }

    fn place(&mut self, agent: usize, item: usize) {
        self.values[agent] += self.inst.value(agent, item);
        self.costs[agent] += self.inst.cost(item);
    }

    fn unplace(&mut self, agent: usize, item: usize) {
        self.values[agent] -= self.inst.value(agent, item);
        self.costs[agent] -= self.inst.cost(item);
    }

    fn seed_incumbent(&mut self, alloc: &Allocation, value: NswValue) {
        let mut assignment = vec![CHARITY; self.m];
        for (i, bundle) in alloc.bundles.iter().enumerate() {
            for &j in bundle {
                assignment[j] = i as u8 + 1;
            }
        }
        self.best = value;
        self.best_assignment = assignment;
    }
}

fn assignment_to_allocation(n: usize, assignment: &[u8]) -> Allocation {
    let mut alloc = Allocation::empty(n);
    for (j, &t) in assignment.iter().enumerate() {
        if t == CHARITY {
            alloc.charity.insert(j);
        } else {
            alloc.bundles[t as usize - 1].insert(j);
        }
    }
    alloc
}

/// Exact Max-NSW search. On node-limit exhaustion the best incumbent is
/// returned with `exact = false`.
pub fn solve_exact(inst: &Instance, node_limit: u64) -> Result<SolveResult, SolveError> {
    let n = inst.n();
    let m = inst.m();
    if n == 0 || m == 0 {
        let allocation = Allocation::all_charity(n, m);
        let value = nsw(inst, &allocation)?;
        return Ok(SolveResult { allocation, nsw: value, exact: true, nodes_explored: 0 });
    }

    let mut search = Search::new(inst, node_limit);
    // Warm start so pruning bites immediately.
    let warm = solve_local_search(inst, 0, 256)?;
    search.seed_incumbent(&warm.allocation, warm.nsw);

    search.search_best(0);
    if search.limit_hit {
        let allocation = assignment_to_allocation(n, &search.best_assignment);
        let value = nsw(inst, &allocation)?;
        return Ok(SolveResult {
            allocation,
            nsw: value,
            exact: false,
            nodes_explored: search.nodes,
        });
    }

    // Rebuild the lexicographically smallest optimal assignment.
    let target = search.best.clone();
    let mut chosen: Vec<u8> = Vec::with_capacity(m);
    search.values = vec![Num::zero(); n];
    search.costs = vec![Num::zero(); n];
    'items: for depth in 0..m {
        for t in 0..=n as u8 {
            if t != CHARITY {
                let agent = t as usize - 1;
                // The smallest optimal vector never assigns an item to an
                // agent who values it zero: charity is smaller and equal.
                if inst.value(agent, depth).is_zero() || !search.fits(agent, depth) {
                    continue;
                }
                search.place(agent, depth);
                search.assignment[depth] = t;
                if search.decide(depth + 1, &target, depth + 1) {
                    chosen.push(t);
                    continue 'items;
                }
                search.unplace(agent, depth);
            } else {
                search.assignment[depth] = CHARITY;
                if search.decide(depth + 1, &target, depth + 1) {
                    chosen.push(CHARITY);
                    continue 'items;
                }
            }
            if search.limit_hit {
                let allocation = assignment_to_allocation(n, &search.best_assignment);
                let value = nsw(inst, &allocation)?;
                return Ok(SolveResult {
                    allocation,
                    nsw: value,
                    exact: false,
                    nodes_explored: search.nodes,
                });
            }
        }
        unreachable!("optimal value must remain attainable during extraction");
    }

    let allocation = assignment_to_allocation(n, &chosen);
    let value = nsw(inst, &allocation)?;
    debug_assert_eq!(value, target);
    Ok(SolveResult { allocation, nsw: value, exact: true, nodes_explored: search.nodes })
}

/// Greedy seeding plus hill climbing. Always returns a feasible allocation;
/// never claims exactness.
pub fn solve_local_search(
    inst: &Instance,
    seed: u64,
    max_iters: u64,
) -> Result<SolveResult, SolveError> {
    let n = inst.n();
    let m = inst.m();
    let charity = n; // bundle id for charity in this routine
    let mut location = vec![charity; m];
    let mut values = vec![Num::zero(); n];
    let mut costs = vec![Num::zero(); n];

    // Items by best density over agents, descending.
    let mut order: Vec<usize> = (0..m).collect();
    let best_density = |j: usize| -> Option<Num> {
        (0..n).map(|i| inst.value(i, j)).max().map(|v| {
            if inst.cost(j).is_zero() {
                // Sorted ahead of everything by the zero-cost rule below.
                v.clone()
            } else {
                v / inst.cost(j)
            }
        })
    };
    order.sort_by(|&a, &b| {
        let (za, zb) = (inst.cost(a).is_zero(), inst.cost(b).is_zero());
        match (za, zb) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            _ => best_density(b)
                .partial_cmp(&best_density(a))
                .unwrap()
                .then(a.cmp(&b)),
        }
    });
    for &j in &order {
        let eligible = (0..n)
            .filter(|&i| &(&costs[i] + inst.cost(j)) <= inst.budget(i))
            .min_by(|&a, &b| values[a].cmp(&values[b]).then(a.cmp(&b)));
        if let Some(i) = eligible {
            location[j] = i;
            values[i] += inst.value(i, j);
            costs[i] += inst.cost(j);
        }
    }

    let nsw_of = |values: &[Num]| -> NswValue {
        let mut out = NswValue::zero();
        for v in values {
            if v.is_positive() {
                out.positive_count += 1;
                out.product *= v;
            }
        }
        out
    };

    let mut current = nsw_of(&values);
    let mut rng = SplitMix64::new(seed);
    let mut evaluated: u64 = 0;

    #[derive(Clone, Copy)]
    enum Move {
        Shift { item: usize, to: usize },
        Swap { a: usize, b: usize },
    }

    for _ in 0..max_iters {
        let mut moves: Vec<Move> = Vec::new();
        for j in 0..m {
            for q in 0..=n {
                if q != location[j] {
                    moves.push(Move::Shift { item: j, to: q });
                }
            }
        }
        for a in 0..m {
            for b in (a + 1)..m {
                if location[a] != location[b] {
                    moves.push(Move::Swap { a, b });
                }
            }
        }
        rng.shuffle(&mut moves);

        let mut improved = false;
        for mv in moves {
            evaluated += 1;
            let mut new_values = values.clone();
            let mut feasible = true;
            // (item, new bundle) pairs realizing the move.
            let placements: Vec<(usize, usize)> = match mv {
                Move::Shift { item, to } => {
                    if to < n && &(&costs[to] + inst.cost(item)) > inst.budget(to) {
                        feasible = false;
                    }
                    let from = location[item];
                    if from < n {
                        new_values[from] -= inst.value(from, item);
                    }
                    if to < n {
                        new_values[to] += inst.value(to, item);
                    }
                    vec![(item, to)]
                }
                Move::Swap { a, b } => {
                    let (p, q) = (location[a], location[b]);
                    if p < n && &(&costs[p] - inst.cost(a) + inst.cost(b)) > inst.budget(p) {
                        feasible = false;
                    }
                    if q < n && &(&costs[q] - inst.cost(b) + inst.cost(a)) > inst.budget(q) {
                        feasible = false;
                    }
                    if p < n {
                        new_values[p] = &new_values[p] - inst.value(p, a) + inst.value(p, b);
                    }
                    if q < n {
                        new_values[q] = &new_values[q] - inst.value(q, b) + inst.value(q, a);
                    }
                    vec![(a, q), (b, p)]
                }
            };
            if !feasible {
                continue;
            }
            let candidate = nsw_of(&new_values);
            if candidate > current {
                for &(item, to) in &placements {
                    let from = location[item];
                    if from < n {
                        costs[from] -= inst.cost(item);
                    }
                    if to < n {
                        costs[to] += inst.cost(item);
                    }
                    location[item] = to;
                }
                values = new_values;
                current = candidate;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }

    let mut allocation = Allocation::empty(n);
    for (j, &loc) in location.iter().enumerate() {
        if loc == charity {
            allocation.charity.insert(j);
        } else {
            allocation.bundles[loc].insert(j);
        }
    }
    let value = nsw(inst, &allocation)?;
    debug_assert_eq!(value, current);
    Ok(SolveResult { allocation, nsw: value, exact: false, nodes_explored: evaluated })
}

/// Evidence that an exact optimum meets the 1/4 EF1 floor and is PO.
#[derive(Debug, Clone)]
pub struct QuarterFloorReport {
    pub solve: SolveResult,
    pub audit: AuditReport,
    pub ef1_ok: bool,
    pub po_ok: bool,
    pub passed: bool,
}

/// Solves exactly, audits the optimum, and checks `ef1_alpha >= 1/4` (or
/// unconstrained) plus Pareto optimality.
pub fn verify_quarter_floor(inst: &Instance, po_limit: u64) -> Result<QuarterFloorReport, SolveError> {
    let solve = solve_exact(inst, DEFAULT_NODE_LIMIT)?;
    if !solve.exact {
        return Err(SolveError::NodeLimitExceeded { nodes: solve.nodes_explored });
    }
    let audit = audit_allocation(inst, &solve.allocation, true, po_limit)?;
    let quarter = Num::new(1.into(), 4.into());
    let ef1_ok = audit.ef1_alpha.is_at_least(&quarter);
    let po_ok = audit.po == Some(true);
    let passed = ef1_ok && po_ok;
    Ok(QuarterFloorReport { solve, audit, ef1_ok, po_ok, passed })
}

/// Evidence for the approximation carry-over: an allocation whose NSW is an
/// `alpha` fraction of the optimum must audit to at least `alpha/4`.
#[derive(Debug, Clone)]
pub struct ApproxFloorReport {
    pub alpha: Num,
    pub ef1_alpha: Alpha,
    pub required: Num,
    pub passed: bool,
}

pub fn verify_approx_floor(
    inst: &Instance,
    alloc: &Allocation,
) -> Result<ApproxFloorReport, SolveError> {
    let opt = solve_exact(inst, DEFAULT_NODE_LIMIT)?;
    if !opt.exact {
        return Err(SolveError::NodeLimitExceeded { nodes: opt.nodes_explored });
    }
    let value = nsw(inst, alloc)?;
    if value.positive_count != opt.nsw.positive_count {
        return Err(SolveError::PositiveCountMismatch {
            expected: opt.nsw.positive_count,
            actual: value.positive_count,
        });
    }
    let alpha = &value.product / &opt.nsw.product;
    let audit = audit_allocation(inst, alloc, false, 0)?;
    let required = &alpha / Num::from_integer(4.into());
    let passed = audit.ef1_alpha.is_at_least(&required);
    Ok(ApproxFloorReport { alpha, ef1_alpha: audit.ef1_alpha, required, passed })
}

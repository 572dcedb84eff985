//! Constructive machinery behind the improvement arguments: balanced pair
//! partitions, the keep-a-third selection, density trimming, heavy/light
//! classification, even fractional partitioning with bounded rounding, a
//! local-search partition for sub-additive set functions, and the builders
//! that turn an envy witness into a feasible allocation with strictly larger
//! lexicographic NSW.
//!
//! Everything here is pure and exact; sorting ties are always broken by item
//! index so outputs are reproducible.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::{bundle_value, is_feasible, Allocation, Instance, ItemSet, ModelError, Num};

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("empty light part: every item of the witness set is heavy")]
    EmptyLightPart,
    #[error("selected part is empty")]
    EmptySelectedPart,
}

/// Splits a set into `{t} ∪ part1 ∪ part2` so that, under the reference
/// valuation, adding `t` to the smaller part makes it at least the other:
/// `min(v(part1), v(part2)) + v(t) >= max(v(part1), v(part2))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartition {
    pub pivot: usize,
    pub part1: ItemSet,
    pub part2: ItemSet,
}

/// Sorts `set` ascending by `values` (ties by index), removes the maximum as
/// the pivot, and deals the remaining prefix alternately: odd positions to
/// `part1`, even to `part2`. Both parts are worth at most half of `v(set)`.
pub fn balanced_pair_partition(
    set: &ItemSet,
    values: &[Num],
) -> Result<PairPartition, ConstructionError> {
    if set.is_empty() {
        return Err(ConstructionError::Precondition("empty set".into()));
    }
    let mut sorted: Vec<usize> = set.iter().copied().collect();
    sorted.sort_by(|&a, &b| values[a].cmp(&values[b]).then(a.cmp(&b)));
    let pivot = sorted.pop().unwrap();
    let mut part1 = ItemSet::new();
    let mut part2 = ItemSet::new();
    for (pos, &j) in sorted.iter().enumerate() {
        if pos % 2 == 0 {
            part1.insert(j);
        } else {
            part2.insert(j);
        }
    }
    Ok(PairPartition { pivot, part1, part2 })
}

/// Oracle access to a set function. Additive valuations are the common case;
/// tests also exercise coverage-style functions.
pub trait SetValuation {
    fn value(&self, set: &ItemSet) -> Num;
}

impl<F: Fn(&ItemSet) -> Num> SetValuation for F {
    fn value(&self, set: &ItemSet) -> Num {
        self(set)
    }
}

/// Additive valuation over an item-indexed value vector.
pub struct AdditiveValuation<'a>(pub &'a [Num]);

impl SetValuation for AdditiveValuation<'_> {
    fn value(&self, set: &ItemSet) -> Num {
        set.iter().map(|&j| self.0[j].clone()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubadditivePartition {
    pub part1: ItemSet,
    pub part2: ItemSet,
    /// Number of elements moved by the local search.
    pub moves: usize,
}

/// Local-search split for a (sub-additive) set function: start from
/// `(T, ∅)` and, while some `e` in the first part satisfies
/// `v(part1 - e) > v(part2 + e)`, move the first such `e` (scanning in
/// ascending index). Each move shrinks the first part, so at most `|T|`
/// moves happen. At termination `v(part1 - e) <= v(part2 + e)` for all `e`.
pub fn subadditive_partition<V: SetValuation>(
    set: &ItemSet,
    valuation: &V,
) -> SubadditivePartition {
    let mut part1 = set.clone();
    let mut part2 = ItemSet::new();
    let mut moves = 0;
    loop {
        let mut moved = None;
        for &e in &part1 {
            let mut without = part1.clone();
            without.remove(&e);
            let mut with = part2.clone();
            with.insert(e);
            if valuation.value(&without) > valuation.value(&with) {
                moved = Some(e);
                break;
            }
        }
        match moved {
            Some(e) => {
                part1.remove(&e);
                part2.insert(e);
                moves += 1;
            }
            None => break,
        }
    }
    SubadditivePartition { part1, part2, moves }
}

/// Picks a sub-bundle of `bundle` with cost at most `budget/2` and value at
/// least a third of the bundle's. Requires `c(bundle) <= budget` and every
/// item cost at most `budget/2`.
///
/// When the whole bundle already fits in half the budget it is returned
/// as-is. Otherwise a prefix (in index order) is grown until its cost
/// exceeds half the budget; the prefix minus its last item, that last item
/// alone, and the remainder partition the bundle into three pieces each
/// within half the budget, and the most valuable piece is returned.
pub fn keep_fraction(
    bundle: &ItemSet,
    budget: &Num,
    costs: &[Num],
    values: &[Num],
) -> Result<ItemSet, ConstructionError> {
    let half = budget / Num::from_integer(2.into());
    let total: Num = bundle.iter().map(|&j| costs[j].clone()).sum();
    if &total > budget {
        return Err(ConstructionError::Precondition(format!(
            "bundle cost {total} exceeds budget {budget}"
        )));
    }
    if let Some(&j) = bundle.iter().find(|&&j| costs[j] > half) {
        return Err(ConstructionError::Precondition(format!(
            "item {j} costs more than half the budget"
        )));
    }
    if total <= half {
        return Ok(bundle.clone());
    }
    let mut prefix = ItemSet::new();
    let mut prefix_cost = Num::zero();
    let mut last = None;
    for &j in bundle {
        prefix.insert(j);
        prefix_cost += &costs[j];
        if prefix_cost > half {
            last = Some(j);
            break;
        }
    }
    let last = last.expect("prefix must overflow half the budget");
    let mut head = prefix.clone();
    head.remove(&last);
    let tail: ItemSet = bundle.difference(&prefix).copied().collect();
    let single = ItemSet::from([last]);
    let value_of = |s: &ItemSet| -> Num { s.iter().map(|&j| values[j].clone()).sum() };
    let mut best = head;
    for candidate in [single, tail] {
        if value_of(&candidate) > value_of(&best) {
            best = candidate;
        }
    }
    Ok(best)
}

/// Value-to-cost ratio of an item. Zero cost is an error.
pub fn density(value: &Num, cost: &Num) -> Result<Num, ConstructionError> {
    if cost.is_zero() {
        return Err(ConstructionError::Precondition("zero cost has no density".into()));
    }
    Ok(value / cost)
}

/// Merges `extra` into `base` under a budget by discarding the lowest-density
/// items of `base` (ties: lower value first, then higher index) until the
/// rest fits beside `extra`. Requires disjoint sets, `c(base) <= budget`,
/// `c(extra) <= budget`, and every item of `base` costing at most
/// `budget/k^4`. The result `Z` satisfies `c(Z) <= budget` and
/// `v(Z) >= (1 - c(extra)/budget - 1/k^4) * v(base) + v(extra)`.
pub fn density_trim(
    base: &ItemSet,
    extra: &ItemSet,
    budget: &Num,
    k: &Num,
    costs: &[Num],
    values: &[Num],
) -> Result<ItemSet, ConstructionError> {
    if base.intersection(extra).next().is_some() {
        return Err(ConstructionError::Precondition("sets must be disjoint".into()));
    }
    let cost_of = |s: &ItemSet| -> Num { s.iter().map(|&j| costs[j].clone()).sum() };
    let base_cost = cost_of(base);
    let extra_cost = cost_of(extra);
    if &base_cost > budget || &extra_cost > budget {
        return Err(ConstructionError::Precondition("input set exceeds the budget".into()));
    }
    if !k.is_positive() {
        return Err(ConstructionError::Precondition("k must be positive".into()));
    }
    let cost_cap = budget / (k * k * k * k);
    if let Some(&j) = base.iter().find(|&&j| costs[j] > cost_cap) {
        return Err(ConstructionError::Precondition(format!(
            "item {j} costs more than budget/k^4"
        )));
    }

    let allowance = budget - &extra_cost;
    let mut kept = base.clone();
    let mut kept_cost = base_cost;
    if kept_cost > allowance {
        // Removal order: density ascending, then value ascending, then index
        // descending. Zero-cost items never help and are never removed.
        let mut removable: Vec<usize> =
            base.iter().copied().filter(|&j| !costs[j].is_zero()).collect();
        removable.sort_by(|&a, &b| {
            (&values[a] * &costs[b])
                .cmp(&(&values[b] * &costs[a]))
                .then(values[a].cmp(&values[b]))
                .then(b.cmp(&a))
        });
        for j in removable {
            if kept_cost <= allowance {
                break;
            }
            kept.remove(&j);
            kept_cost -= &costs[j];
        }
    }
    Ok(kept.union(extra).copied().collect())
}

/// Heavy/light classification of a set relative to its own total value:
/// an item is heavy when its contribution `v_j / v(set)` is at least
/// `1/k^3`. `f` is the light items' share of the total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeavyLightSplit {
    pub heavy: ItemSet,
    pub light: ItemSet,
    pub light_share: Num,
    pub k: Num,
}

pub fn heavy_light_split(set: &ItemSet, values: &[Num], k: &Num) -> HeavyLightSplit {
    assert!(k.is_positive(), "k must be positive");
    let total: Num = set.iter().map(|&j| values[j].clone()).sum();
    if set.is_empty() || total.is_zero() {
        return HeavyLightSplit {
            heavy: ItemSet::new(),
            light: ItemSet::new(),
            light_share: Num::zero(),
            k: k.clone(),
        };
    }
    let threshold = &total / (k * k * k);
    let mut heavy = ItemSet::new();
    let mut light = ItemSet::new();
    let mut light_value = Num::zero();
    for &j in set {
        if values[j] >= threshold {
            heavy.insert(j);
        } else {
            light.insert(j);
            light_value += &values[j];
        }
    }
    HeavyLightSplit { heavy, light, light_share: light_value / total, k: k.clone() }
}

/// A fractional partition of a set into `k` parts of exactly equal cost and
/// value, each with at most 4 strictly fractional items, plus the integral
/// rounding that assigns every fractional item to the lowest-index part
/// holding a positive fraction of it.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalPartition {
    /// Per part: item index -> fraction in (0, 1].
    pub parts: Vec<BTreeMap<usize, Num>>,
    /// Interior cost boundaries `b_1 .. b_{k-1}` of the prefix walk.
    pub boundaries: Vec<Num>,
    pub rounded: Vec<ItemSet>,
}

/// Prefix geometry over items ordered by density descending: a position
/// `b` in `[0, S]` cuts the cost axis, and `value_at(b)` is the value of the
/// cost-`b` fractional prefix. Piecewise linear and nondecreasing in `b`
/// once densities are sorted descending.
struct PrefixWalk {
    order: Vec<usize>,
    cum_cost: Vec<Num>,
    cum_value: Vec<Num>,
}

impl PrefixWalk {
    fn new(set: &ItemSet, costs: &[Num], values: &[Num]) -> Self {
        let mut order: Vec<usize> = set.iter().copied().collect();
        order.sort_by(|&a, &b| {
            (&values[b] * &costs[a])
                .cmp(&(&values[a] * &costs[b]))
                .then(a.cmp(&b))
        });
        let mut cum_cost = vec![Num::zero()];
        let mut cum_value = vec![Num::zero()];
        for &j in &order {
            cum_cost.push(cum_cost.last().unwrap() + &costs[j]);
            cum_value.push(cum_value.last().unwrap() + &values[j]);
        }
        PrefixWalk { order, cum_cost, cum_value }
    }

    fn total_cost(&self) -> &Num {
        self.cum_cost.last().unwrap()
    }

    fn total_value(&self) -> &Num {
        self.cum_value.last().unwrap()
    }

    fn value_at(&self, b: &Num) -> Num {
        debug_assert!(!b.is_negative() && b <= self.total_cost());
        match self.cum_cost.binary_search(b) {
            Ok(t) => self.cum_value[t].clone(),
            Err(t) => {
                // cum_cost[t-1] < b < cum_cost[t]; interpolate within the
                // item's segment (width = its cost, positive by precondition).
                let lo = t - 1;
                let width = &self.cum_cost[t] - &self.cum_cost[lo];
                let frac = (b - &self.cum_cost[lo]) / width;
                &self.cum_value[lo] + (&self.cum_value[t] - &self.cum_value[lo]) * frac
            }
        }
    }
}

/// Partitions `set` fractionally into `k` parts of equal cost `S/k` and
/// equal value `v(set)/k`, where part `i` is the union of a high-density
/// window `(b_{i-1}, b_i]` and a low-density window chosen so costs balance;
/// each interior boundary is found by an exact breakpoint walk on the
/// piecewise-linear prefix value function. Requires `k >= 1`, a nonempty
/// set, and strictly positive costs.
pub fn fractional_even_partition(
    set: &ItemSet,
    k: usize,
    costs: &[Num],
    values: &[Num],
) -> Result<FractionalPartition, ConstructionError> {
    if k == 0 {
        return Err(ConstructionError::Precondition("k must be at least 1".into()));
    }
    if set.is_empty() {
        return Err(ConstructionError::Precondition("empty set".into()));
    }
    if let Some(&j) = set.iter().find(|&&j| !costs[j].is_positive()) {
        return Err(ConstructionError::Precondition(format!(
            "item {j} must have positive cost"
        )));
    }
    let walk = PrefixWalk::new(set, costs, values);
    let total_cost = walk.total_cost().clone();
    let total_value = walk.total_value().clone();
    let k_num = Num::from_integer(k.into());
    let slice_cost = &total_cost / &k_num;
    let slice_value = &total_value / &k_num;

    // boundaries[i] = b_i, with b_0 = 0 and b_k = b_{k-1} + S/k.
    let mut boundaries = vec![Num::zero()];
    for i in 1..k {
        let prev = boundaries[i - 1].clone();
        let hi = &prev + &slice_cost;
        // Back-window offset for part i: its low-density window is
        // (back + b, back + prev] shifted as b moves.
        let back = Num::from_integer((k - i).into()) * &total_cost / &k_num;
        // Part value as a function of b:
        //   g(b) = W(b) - W(prev) + W(back + prev + S/k) - W(back + b).
        let hi_window_end = &back + &prev + &slice_cost;
        let fixed = walk.value_at(&hi_window_end) - walk.value_at(&prev);
        let g = |b: &Num| -> Num { &fixed + walk.value_at(b) - walk.value_at(&(&back + b)) };

        // Candidate breakpoints: prefix-boundary crossings of either window.
        let mut candidates: Vec<Num> = vec![prev.clone(), hi.clone()];
        for c in &walk.cum_cost {
            if c >= &prev && c <= &hi {
                candidates.push(c.clone());
            }
            let shifted = c - &back;
            if shifted >= prev && shifted <= hi {
                candidates.push(shifted);
            }
        }
        candidates.sort();
        candidates.dedup();

        let mut b_i = None;
        for w in candidates.windows(2) {
            let (lo_v, hi_v) = (g(&w[0]), g(&w[1]));
            if lo_v == slice_value {
                b_i = Some(w[0].clone());
                break;
            }
            if lo_v < slice_value && slice_value <= hi_v {
                // Linear on this segment.
                let slope = (&hi_v - &lo_v) / (&w[1] - &w[0]);
                b_i = Some(&w[0] + (&slice_value - &lo_v) / slope);
                break;
            }
        }
        // The last candidate can be the exact solution.
        if b_i.is_none() && g(&hi) == slice_value {
            b_i = Some(hi.clone());
        }
        let b_i = b_i.ok_or_else(|| {
            ConstructionError::Precondition("no boundary balances the part value".into())
        })?;
        boundaries.push(b_i);
    }
    boundaries.push(&boundaries[k - 1] + &slice_cost);

    // Materialize fractions from the two windows of every part.
    let fractions_in = |a: &Num, b: &Num, out: &mut BTreeMap<usize, Num>| {
        for (idx, &j) in walk.order.iter().enumerate() {
            let seg_lo = &walk.cum_cost[idx];
            let seg_hi = &walk.cum_cost[idx + 1];
            let lo = if a > seg_lo { a.clone() } else { seg_lo.clone() };
            let hi = if b < seg_hi { b.clone() } else { seg_hi.clone() };
            if hi > lo {
                let frac = (&hi - &lo) / &costs[j];
                *out.entry(j).or_insert_with(Num::zero) += frac;
            }
        }
    };
    let mut parts = Vec::with_capacity(k);
    for i in 1..=k {
        let mut part = BTreeMap::new();
        let front_lo = &boundaries[i - 1];
        let front_hi = &boundaries[i];
        fractions_in(front_lo, front_hi, &mut part);
        let back = Num::from_integer((k - i).into()) * &total_cost / &k_num;
        let back_lo = &back + front_hi;
        let back_hi = &back + &total_cost / &k_num + front_lo;
        fractions_in(&back_lo, &back_hi, &mut part);
        parts.push(part);
    }

    // Round: integral items stay; each strictly fractional item goes to the
    // lowest-index part holding a positive fraction of it.
    let one = Num::one();
    let mut rounded: Vec<ItemSet> = vec![ItemSet::new(); k];
    let mut assigned = ItemSet::new();
    for (i, part) in parts.iter().enumerate() {
        for (&j, frac) in part {
            if frac == &one {
                rounded[i].insert(j);
                assigned.insert(j);
            }
        }
    }
    for &j in set {
        if assigned.contains(&j) {
            continue;
        }
        for (i, part) in parts.iter().enumerate() {
            if part.get(&j).map(|f| f.is_positive()).unwrap_or(false) {
                rounded[i].insert(j);
                break;
            }
        }
    }

    let interior = boundaries[1..k].to_vec();
    Ok(FractionalPartition { parts, boundaries: interior, rounded })
}

/// Checks the shared witness preconditions of the improvement builders and
/// returns `v_i(own bundle)`.
fn check_witness(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
    set: &ItemSet,
    factor: &Num,
) -> Result<Num, ConstructionError> {
    if !is_feasible(inst, alloc)? {
        return Err(ConstructionError::Precondition("allocation infeasible".into()));
    }
    if envier == envied || envier >= inst.n() || envied >= inst.n() {
        return Err(ConstructionError::Precondition("bad agent pair".into()));
    }
    if set.is_empty() {
        return Err(ConstructionError::Precondition("empty witness set".into()));
    }
    if !set.is_subset(&alloc.bundles[envied]) {
        return Err(ConstructionError::Precondition(
            "witness set is not inside the envied bundle".into(),
        ));
    }
    let set_cost: Num = set.iter().map(|&j| inst.cost(j).clone()).sum();
    if &set_cost > inst.budget(envier) {
        return Err(ConstructionError::Precondition("witness set unaffordable".into()));
    }
    let own = bundle_value(inst, envier, &alloc.bundles[envier])?;
    // v_i(set - g) > factor * own for every g reduces to the single check
    // with g = an item of maximum v_i value.
    let set_value: Num = set.iter().map(|&j| inst.value(envier, j).clone()).sum();
    let max_value = set.iter().map(|&j| inst.value(envier, j)).max().unwrap();
    if &set_value - max_value <= factor * &own {
        return Err(ConstructionError::Precondition(format!(
            "witness does not violate the factor-{factor} bound"
        )));
    }
    for a in 0..inst.n() {
        if a != envier && !bundle_value(inst, a, &alloc.bundles[a])?.is_positive() {
            return Err(ConstructionError::Precondition(format!(
                "agent {a} has zero bundle value"
            )));
        }
    }
    Ok(own)
}

/// Rebuilds the allocation after moving `gained` from `envied` to `envier`,
/// keeping `kept` of the envier's old bundle (the rest goes to charity).
fn reallocate(
    alloc: &Allocation,
    envier: usize,
    envied: usize,
    gained: &ItemSet,
    kept: &ItemSet,
) -> Allocation {
    let mut out = alloc.clone();
    let discarded: ItemSet = alloc.bundles[envier].difference(kept).copied().collect();
    out.bundles[envier] = kept.union(gained).copied().collect();
    out.bundles[envied] = alloc.bundles[envied].difference(gained).copied().collect();
    out.charity = alloc.charity.union(&discarded).copied().collect();
    out
}

/// Improvement from a factor-4 witness: pair-partition the witness set under
/// the owner's valuation, hand the envier her preferred part, and discard
/// her old bundle. The result is feasible with strictly larger NSW.
pub fn construct_improvement_quarter(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
    set: &ItemSet,
) -> Result<Allocation, ConstructionError> {
    let four = Num::from_integer(4.into());
    check_witness(inst, alloc, envier, envied, set, &four)?;
    let pair = balanced_pair_partition(set, &inst.agents[envied].values)?;
    let v1: Num = pair.part1.iter().map(|&j| inst.value(envier, j).clone()).sum();
    let v2: Num = pair.part2.iter().map(|&j| inst.value(envier, j).clone()).sum();
    let gained = if v2 > v1 { &pair.part2 } else { &pair.part1 };
    Ok(reallocate(alloc, envier, envied, gained, &ItemSet::new()))
}

/// Improvement at factor 11/3 when every item costs at most half of every
/// budget. Either one part alone is already worth more than twice the
/// envier's bundle (then proceed as in the factor-4 case), or the cheaper
/// part is combined with a third of the old bundle kept via
/// `keep_fraction`.
pub fn construct_improvement_warmup(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
    set: &ItemSet,
) -> Result<Allocation, ConstructionError> {
    let factor = Num::new(11.into(), 3.into());
    let own = check_witness(inst, alloc, envier, envied, set, &factor)?;
    for i in 0..inst.n() {
        let budget = inst.budget(i);
        for j in 0..inst.m() {
            if &(inst.cost(j) * Num::from_integer(2.into())) > budget {
                return Err(ConstructionError::Precondition(format!(
                    "item {j} costs more than half of agent {i}'s budget"
                )));
            }
        }
    }
    let pair = balanced_pair_partition(set, &inst.agents[envied].values)?;
    let value_for = |s: &ItemSet| -> Num { s.iter().map(|&j| inst.value(envier, j).clone()).sum() };
    let cost_of = |s: &ItemSet| -> Num { s.iter().map(|&j| inst.cost(j).clone()).sum() };
    let (v1, v2) = (value_for(&pair.part1), value_for(&pair.part2));
    let twice_own = &own * Num::from_integer(2.into());

    if v1.clone().max(v2.clone()) > twice_own {
        let gained = if v2 > v1 { &pair.part2 } else { &pair.part1 };
        return Ok(reallocate(alloc, envier, envied, gained, &ItemSet::new()));
    }
    // Both parts are moderate, so each is worth more than 5/3 of the old
    // bundle; take the cheaper one (cost at most half the budget) and keep a
    // third of the old bundle beside it.
    let gained = if cost_of(&pair.part2) < cost_of(&pair.part1) {
        &pair.part2
    } else {
        &pair.part1
    };
    let kept = keep_fraction(
        &alloc.bundles[envier],
        inst.budget(envier),
        &inst.items.iter().map(|it| it.cost.clone()).collect::<Vec<_>>(),
        &inst.agents[envier].values,
    )?;
    Ok(reallocate(alloc, envier, envied, gained, &kept))
}

/// Improvement for the large-budget regime: drop the owner's most valued
/// item from the witness set, split the rest into heavy and light items,
/// evenly partition the light ones into `floor(k)` parts, take the rounded
/// part the envier values most, and merge it into her bundle with
/// `density_trim`. Requires `k > 10`; the strict-improvement guarantee
/// additionally needs the witness to beat the factor `2 + 20/(k - 10)`.
pub fn construct_improvement_large_budget(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
    set: &ItemSet,
    k: &Num,
) -> Result<Allocation, ConstructionError> {
    let ten = Num::from_integer(10.into());
    if k <= &ten {
        return Err(ConstructionError::Precondition(
            "k must exceed 10 for the large-budget factor".into(),
        ));
    }
    let factor = Num::from_integer(2.into()) + Num::from_integer(20.into()) / (k - &ten);

    // The removed pivot is the owner's maximum-value item (lowest index on
    // ties), and the factor bound applies to the remainder.
    if set.is_empty() {
        return Err(ConstructionError::Precondition("empty witness set".into()));
    }
    let pivot = *set
        .iter()
        .max_by(|&&a, &&b| {
            inst.value(envied, a)
                .cmp(inst.value(envied, b))
                .then(b.cmp(&a))
        })
        .unwrap();
    let mut trimmed = set.clone();
    trimmed.remove(&pivot);
    if trimmed.is_empty() {
        return Err(ConstructionError::Precondition("witness set has a single item".into()));
    }
    // check_witness proves v_i(trimmed) - max <= ... is not what we need:
    // here the bound is on v_i(trimmed) itself, with the owner-max removed.
    if !is_feasible(inst, alloc)? {
        return Err(ConstructionError::Precondition("allocation infeasible".into()));
    }
    if !set.is_subset(&alloc.bundles[envied]) {
        return Err(ConstructionError::Precondition(
            "witness set is not inside the envied bundle".into(),
        ));
    }
    let set_cost: Num = set.iter().map(|&j| inst.cost(j).clone()).sum();
    if &set_cost > inst.budget(envier) {
        return Err(ConstructionError::Precondition("witness set unaffordable".into()));
    }
    let own = bundle_value(inst, envier, &alloc.bundles[envier])?;
    let trimmed_value: Num = trimmed.iter().map(|&j| inst.value(envier, j).clone()).sum();
    if trimmed_value <= &factor * &own {
        return Err(ConstructionError::Precondition(format!(
            "witness does not violate the large-budget factor {factor}"
        )));
    }

    let split = heavy_light_split(&trimmed, &inst.agents[envied].values, k);
    if split.light.is_empty() {
        return Err(ConstructionError::EmptyLightPart);
    }
    let parts = k.floor().to_integer();
    let parts: usize = parts.try_into().map_err(|_| {
        ConstructionError::Precondition("k too large for a part count".into())
    })?;
    let costs: Vec<Num> = inst.items.iter().map(|it| it.cost.clone()).collect();
    let partition =
        fractional_even_partition(&split.light, parts, &costs, &inst.agents[envied].values)?;
    let chosen = partition
        .rounded
        .iter()
        .max_by(|a, b| {
            let va: Num = a.iter().map(|&j| inst.value(envier, j).clone()).sum();
            let vb: Num = b.iter().map(|&j| inst.value(envier, j).clone()).sum();
            va.cmp(&vb)
        })
        .cloned()
        .unwrap_or_default();
    if chosen.is_empty() {
        return Err(ConstructionError::EmptySelectedPart);
    }
    let chosen_cost: Num = chosen.iter().map(|&j| inst.cost(j).clone()).sum();
    if &chosen_cost > inst.budget(envier) {
        return Err(ConstructionError::Precondition(
            "selected part alone exceeds the budget".into(),
        ));
    }
    let merged = density_trim(
        &alloc.bundles[envier],
        &chosen,
        inst.budget(envier),
        k,
        &costs,
        &inst.agents[envier].values,
    )?;
    let kept: ItemSet = merged.difference(&chosen).copied().collect();
    Ok(reallocate(alloc, envier, envied, &chosen, &kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{num, ratio, Agent, Item};

    fn set(indices: &[usize]) -> ItemSet {
        indices.iter().copied().collect()
    }

    fn sum_over(s: &ItemSet, v: &[Num]) -> Num {
        s.iter().map(|&j| v[j].clone()).sum()
    }

    #[test]
    fn pair_partition_alternates_sorted_prefix() {
        let values: Vec<Num> = [1, 2, 3, 4, 5].iter().map(|&x| num(x)).collect();
        let p = balanced_pair_partition(&set(&[0, 1, 2, 3, 4]), &values).unwrap();
        assert_eq!(p.pivot, 4);
        assert_eq!(p.part1, set(&[0, 2]));
        assert_eq!(p.part2, set(&[1, 3]));
        let (v1, v2) = (sum_over(&p.part1, &values), sum_over(&p.part2, &values));
        // 4 <= 6 <= 4 + 5
        assert!(v1.clone().min(v2.clone()) + num(5) >= v1.max(v2));
    }

    #[test]
    fn pair_partition_small_sets() {
        let values: Vec<Num> = vec![num(9)];
        let p = balanced_pair_partition(&set(&[0]), &values).unwrap();
        assert_eq!(p.pivot, 0);
        assert!(p.part1.is_empty() && p.part2.is_empty());

        let values: Vec<Num> = vec![num(3), num(7)];
        let p = balanced_pair_partition(&set(&[0, 1]), &values).unwrap();
        assert_eq!(p.pivot, 1);
        assert_eq!(p.part1, set(&[0]));
        assert!(p.part2.is_empty());

        assert!(balanced_pair_partition(&ItemSet::new(), &values).is_err());
    }

    #[test]
    fn subadditive_partition_additive_trace() {
        let values: Vec<Num> = vec![num(5), num(3), num(2)];
        let r = subadditive_partition(&set(&[0, 1, 2]), &AdditiveValuation(&values));
        assert_eq!(r.part1, set(&[0, 2]));
        assert_eq!(r.part2, set(&[1]));
        assert_eq!(r.moves, 1);
    }

    #[test]
    fn subadditive_partition_singleton() {
        let values: Vec<Num> = vec![num(4)];
        let r = subadditive_partition(&set(&[0]), &AdditiveValuation(&values));
        assert_eq!(r.part1, set(&[0]));
        assert!(r.part2.is_empty());
        assert_eq!(r.moves, 0);
    }

    #[test]
    fn subadditive_partition_coverage_trace() {
        // Items cover subsets of a 2-element universe; value = |union|.
        let cover = |s: &ItemSet| -> Num {
            let mut covered = [false, false];
            for &j in s {
                match j {
                    0 => covered[0] = true,          // A -> {1}
                    1 => covered[1] = true,          // B -> {2}
                    _ => covered = [true, true],     // C -> {1, 2}
                }
            }
            num(covered.iter().filter(|&&c| c).count() as i64)
        };
        let r = subadditive_partition(&set(&[0, 1, 2]), &cover);
        assert_eq!(r.part1, set(&[1, 2]));
        assert_eq!(r.part2, set(&[0]));
        // Termination condition holds for every remaining element.
        for &e in &r.part1 {
            let mut without = r.part1.clone();
            without.remove(&e);
            let mut with = r.part2.clone();
            with.insert(e);
            assert!(cover(&without) <= cover(&with));
        }
    }

    #[test]
    fn keep_fraction_paths() {
        // Whole bundle already cheap.
        let costs = vec![num(5)];
        let values = vec![num(7)];
        let kept = keep_fraction(&set(&[0]), &num(10), &costs, &values).unwrap();
        assert_eq!(kept, set(&[0]));

        // Three-way split: prefix overflows half the budget at item 1.
        let costs = vec![num(3); 4];
        let values = vec![num(1); 4];
        let kept = keep_fraction(&set(&[0, 1, 2, 3]), &num(12), &costs, &values).unwrap();
        assert_eq!(kept, set(&[0, 1]));
        assert_eq!(sum_over(&kept, &values), num(2)); // 2 >= 4/3

        // Preconditions.
        let costs = vec![num(9), num(1)];
        let values = vec![num(1), num(1)];
        assert!(keep_fraction(&set(&[0, 1]), &num(10), &costs, &values).is_err());
        assert!(keep_fraction(&set(&[0, 1]), &num(4), &costs, &values).is_err());
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&num(4), &num(2)).unwrap(), num(2));
        assert_eq!(density(&num(0), &num(5)).unwrap(), num(0));
        assert_eq!(density(&ratio(11, 10), &num(1)).unwrap(), ratio(11, 10));
        assert!(density(&num(1), &num(0)).is_err());
    }

    #[test]
    fn density_trim_no_overlap_case() {
        let costs = vec![num(1); 4];
        let values = vec![num(2); 4];
        let z = density_trim(&set(&[0, 1, 2]), &ItemSet::new(), &num(16), &num(2), &costs, &values)
            .unwrap();
        assert_eq!(z, set(&[0, 1, 2]));
    }

    #[test]
    fn density_trim_removes_lowest_density() {
        // 16 unit-cost items valued 16..1 and one extra set worth 10 at cost 4.
        let mut costs: Vec<Num> = vec![num(1); 16];
        costs.push(num(4));
        let mut values: Vec<Num> = (0..16).map(|j| num(16 - j as i64)).collect();
        values.push(num(10));
        let base = set(&(0..16).collect::<Vec<_>>());
        let extra = set(&[16]);
        let budget = num(16);
        let k = num(2); // k^4 = 16, so unit items pass the cost cap
        let z = density_trim(&base, &extra, &budget, &k, &costs, &values).unwrap();
        // The four lowest values (items 12..15, values 4..1) are removed.
        assert_eq!(z, set(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 16]));
        let z_value = sum_over(&z, &values);
        assert_eq!(z_value, num(136));
        // v(Z) >= (1 - 4/16 - 1/16) * 136 + 10 = 207/2.
        assert!(z_value >= ratio(207, 2));
        assert!(sum_over(&z, &costs) <= budget);
    }

    #[test]
    fn density_trim_vacuous_regime() {
        // c(extra)/budget + 1/k^4 >= 1: the value bound implies nothing, but
        // the result must still contain the extra set within budget.
        let costs = vec![ratio(1, 16), num(15)];
        let values = vec![num(1), num(40)];
        let z = density_trim(&set(&[0]), &set(&[1]), &num(16), &num(2), &costs, &values).unwrap();
        assert!(z.contains(&1));
        assert!(sum_over(&z, &costs) <= num(16));
    }

    #[test]
    fn heavy_light_examples() {
        let values: Vec<Num> = [8, 2, 1, 1, 1, 1, 1, 1].iter().map(|&x| num(x)).collect();
        let split = heavy_light_split(&set(&[0, 1, 2, 3, 4, 5, 6, 7]), &values, &num(2));
        assert_eq!(split.heavy, set(&[0, 1])); // 2/16 = 1/8 meets the threshold
        assert_eq!(split.light, set(&[2, 3, 4, 5, 6, 7]));
        assert_eq!(split.light_share, ratio(3, 8));

        // Few equal items: every contribution is at least 1/k^3.
        let values: Vec<Num> = vec![num(5); 4];
        let split = heavy_light_split(&set(&[0, 1, 2, 3]), &values, &num(2));
        assert_eq!(split.heavy.len(), 4);
        assert!(split.light.is_empty());
        assert_eq!(split.light_share, num(0));

        let split = heavy_light_split(&ItemSet::new(), &values, &num(2));
        assert!(split.heavy.is_empty() && split.light.is_empty());
        assert_eq!(split.light_share, num(0));
    }

    #[test]
    fn fractional_partition_integral_case() {
        let costs = vec![num(1); 4];
        let values: Vec<Num> = [4, 3, 2, 1].iter().map(|&x| num(x)).collect();
        let p = fractional_even_partition(&set(&[0, 1, 2, 3]), 2, &costs, &values).unwrap();
        assert_eq!(p.boundaries, vec![num(1)]);
        assert_eq!(p.rounded[0], set(&[0, 3]));
        assert_eq!(p.rounded[1], set(&[1, 2]));
        for part in &p.parts {
            let cost: Num = part.iter().map(|(&j, f)| f * &costs[j]).sum();
            let value: Num = part.iter().map(|(&j, f)| f * &values[j]).sum();
            assert_eq!(cost, num(2));
            assert_eq!(value, num(5));
            assert!(part.values().all(|f| f == &Num::one()));
        }
    }

    #[test]
    fn fractional_partition_single_part() {
        let costs = vec![num(2), num(3)];
        let values = vec![num(1), num(5)];
        let p = fractional_even_partition(&set(&[0, 1]), 1, &costs, &values).unwrap();
        assert!(p.boundaries.is_empty());
        assert_eq!(p.rounded[0], set(&[0, 1]));
    }

    #[test]
    fn fractional_partition_splits_items() {
        let costs = vec![num(1), num(1)];
        let values = vec![num(3), num(1)];
        let p = fractional_even_partition(&set(&[0, 1]), 2, &costs, &values).unwrap();
        assert_eq!(p.boundaries, vec![ratio(1, 2)]);
        // Each part holds half of each item; rounding sends both to part 1.
        for part in &p.parts {
            assert_eq!(part.get(&0), Some(&ratio(1, 2)));
            assert_eq!(part.get(&1), Some(&ratio(1, 2)));
        }
        assert_eq!(p.rounded[0], set(&[0, 1]));
        assert!(p.rounded[1].is_empty());
    }

    fn tight_quarter_instance() -> Instance {
        let mut values = vec![ratio(11, 10)];
        values.extend((0..10).map(|_| ratio(2, 5)));
        let agents = (0..2)
            .map(|i| Agent {
                id: format!("a{}", i + 1),
                budget: num(1),
                values: values.clone(),
            })
            .collect();
        let mut items = vec![Item { id: "g0".into(), cost: num(1) }];
        items.extend((0..10).map(|j| Item { id: format!("g{}", j + 1), cost: ratio(1, 10) }));
        Instance::new(agents, items).unwrap()
    }

    #[test]
    fn quarter_improvement_trace() {
        let inst = tight_quarter_instance();
        // A deliberately bad allocation: one small item for agent 1, nine for
        // agent 2, the big item wasted on charity.
        let alloc = Allocation {
            bundles: vec![set(&[1]), set(&[2, 3, 4, 5, 6, 7, 8, 9, 10])],
            charity: set(&[0]),
        };
        let witness: ItemSet = (2..=10).collect();
        let before = crate::model::nsw(&inst, &alloc).unwrap();
        assert_eq!(before.product, ratio(36, 25));
        let improved = construct_improvement_quarter(&inst, &alloc, 0, 1, &witness).unwrap();
        let after = crate::model::nsw(&inst, &improved).unwrap();
        assert_eq!(after.product, ratio(16, 5));
        assert!(after > before);
        assert_eq!(improved.bundles[0], set(&[2, 4, 6, 8]));
        assert_eq!(improved.bundles[1], set(&[3, 5, 7, 9, 10]));
        assert_eq!(improved.charity, set(&[0, 1]));
    }

    #[test]
    fn quarter_improvement_rejects_singleton_witness() {
        let inst = tight_quarter_instance();
        let alloc = Allocation {
            bundles: vec![set(&[1]), set(&[2, 3, 4, 5, 6, 7, 8, 9, 10])],
            charity: set(&[0]),
        };
        let err = construct_improvement_quarter(&inst, &alloc, 0, 1, &set(&[2])).unwrap_err();
        assert!(matches!(err, ConstructionError::Precondition(_)));
    }

    #[test]
    fn quarter_improvement_tie_breaks_by_index() {
        // Three items the envier values at 10 each; the owner is indifferent.
        let inst = Instance::new(
            vec![
                Agent { id: "a".into(), budget: num(3), values: vec![num(10), num(10), num(10), num(1)] },
                Agent { id: "b".into(), budget: num(3), values: vec![num(2), num(2), num(2), num(0)] },
            ],
            vec![
                Item { id: "g0".into(), cost: num(1) },
                Item { id: "g1".into(), cost: num(1) },
                Item { id: "g2".into(), cost: num(1) },
                Item { id: "g3".into(), cost: num(1) },
            ],
        )
        .unwrap();
        let alloc = Allocation {
            bundles: vec![set(&[3]), set(&[0, 1, 2])],
            charity: ItemSet::new(),
        };
        let improved =
            construct_improvement_quarter(&inst, &alloc, 0, 1, &set(&[0, 1, 2])).unwrap();
        // Sorted by owner value (all equal) the pivot is item 2; part1 = {0}.
        assert_eq!(improved.bundles[0], set(&[0]));
        let v = crate::model::bundle_value(&inst, 0, &improved.bundles[0]).unwrap();
        assert_eq!(v, num(10));
    }

    #[test]
    fn warmup_improvement_case1() {
        // One part is worth more than twice the envier's bundle on its own.
        let inst = Instance::new(
            vec![
                Agent {
                    id: "a".into(),
                    budget: num(4),
                    values: vec![num(30), num(5), num(29), num(9), num(0)],
                },
                Agent {
                    id: "b".into(),
                    budget: num(4),
                    values: vec![num(1), num(2), num(3), num(0), num(1)],
                },
            ],
            (0..5)
                .map(|j| Item { id: format!("g{j}"), cost: num(1) })
                .collect(),
        )
        .unwrap();
        let alloc = Allocation {
            bundles: vec![set(&[3]), set(&[0, 1, 2, 4])],
            charity: ItemSet::new(),
        };
        let witness = set(&[0, 1, 2]);
        let before = crate::model::nsw(&inst, &alloc).unwrap();
        let improved = construct_improvement_warmup(&inst, &alloc, 0, 1, &witness).unwrap();
        let after = crate::model::nsw(&inst, &improved).unwrap();
        assert!(after > before);
        // Case 1: the old bundle is discarded entirely.
        assert_eq!(improved.bundles[0], set(&[0]));
        assert!(improved.charity.contains(&3));
    }

    #[test]
    fn warmup_improvement_case2_keeps_a_third() {
        // Five equal witness items: both parts are moderate, so the cheaper
        // part is combined with the kept old bundle.
        let inst = Instance::new(
            vec![
                Agent {
                    id: "a".into(),
                    budget: num(4),
                    values: vec![num(1), num(1), num(1), num(1), num(1), ratio(1, 2), ratio(1, 2)],
                },
                Agent {
                    id: "b".into(),
                    budget: num(4),
                    values: vec![num(1), num(1), num(1), num(1), num(1), num(0), num(0)],
                },
            ],
            vec![
                Item { id: "g0".into(), cost: ratio(1, 2) },
                Item { id: "g1".into(), cost: ratio(1, 2) },
                Item { id: "g2".into(), cost: ratio(1, 2) },
                Item { id: "g3".into(), cost: ratio(1, 2) },
                Item { id: "g4".into(), cost: ratio(1, 2) },
                Item { id: "g5".into(), cost: num(1) },
                Item { id: "g6".into(), cost: num(1) },
            ],
        )
        .unwrap();
        let alloc = Allocation {
            bundles: vec![set(&[5, 6]), set(&[0, 1, 2, 3, 4])],
            charity: ItemSet::new(),
        };
        let witness = set(&[0, 1, 2, 3, 4]);
        let before = crate::model::nsw(&inst, &alloc).unwrap();
        assert_eq!(before.product, num(5));
        let improved = construct_improvement_warmup(&inst, &alloc, 0, 1, &witness).unwrap();
        let after = crate::model::nsw(&inst, &improved).unwrap();
        assert_eq!(after.product, num(9));
        // Case 2: part1 = {0, 2} joins the fully kept old bundle.
        assert_eq!(improved.bundles[0], set(&[0, 2, 5, 6]));

        // Empty witness set errors.
        assert!(construct_improvement_warmup(&inst, &alloc, 0, 1, &ItemSet::new()).is_err());
    }

    fn large_budget_synthetic() -> (Instance, Allocation, ItemSet) {
        // kappa = 160000 via unit costs and budget 160000. The witness set
        // holds the owner's prized item (value 10000), one heavy item
        // (9000), and 30 light items the envier actually wants.
        let m = 33;
        let mut v_owner = vec![num(0); m];
        let mut v_envier = vec![num(0); m];
        v_envier[0] = num(10); // envier's own item
        v_owner[1] = num(10000); // the owner's maximum, removed as pivot
        v_owner[2] = num(9000); // heavy
        for j in 3..m {
            v_owner[j] = num(1); // light
            v_envier[j] = num(10);
        }
        let inst = Instance::new(
            vec![
                Agent { id: "a".into(), budget: num(160000), values: v_envier },
                Agent { id: "b".into(), budget: num(160000), values: v_owner },
            ],
            (0..m)
                .map(|j| Item { id: format!("g{j}"), cost: num(1) })
                .collect(),
        )
        .unwrap();
        let alloc = Allocation {
            bundles: vec![set(&[0]), (1..m).collect()],
            charity: ItemSet::new(),
        };
        let witness: ItemSet = (1..m).collect();
        (inst, alloc, witness)
    }

    #[test]
    fn large_budget_improvement_increases_nsw() {
        let (inst, alloc, witness) = large_budget_synthetic();
        let before = crate::model::nsw(&inst, &alloc).unwrap();
        let improved =
            construct_improvement_large_budget(&inst, &alloc, 0, 1, &witness, &num(20)).unwrap();
        assert!(crate::model::is_feasible(&inst, &improved).unwrap());
        let after = crate::model::nsw(&inst, &improved).unwrap();
        assert!(after > before);
        // The pivot and the heavy item stay with the owner.
        assert!(improved.bundles[1].contains(&1));
        assert!(improved.bundles[1].contains(&2));
    }

    #[test]
    fn large_budget_improvement_degenerate_cases() {
        let (inst, alloc, witness) = large_budget_synthetic();
        assert!(matches!(
            construct_improvement_large_budget(&inst, &alloc, 0, 1, &witness, &num(5)),
            Err(ConstructionError::Precondition(_))
        ));

        // All-heavy witness: four equal owner values each contribute 1/4.
        let inst = Instance::new(
            vec![
                Agent {
                    id: "a".into(),
                    budget: num(160000),
                    values: vec![num(1), num(50), num(50), num(50), num(50)],
                },
                Agent {
                    id: "b".into(),
                    budget: num(160000),
                    values: vec![num(0), num(7), num(5), num(5), num(5)],
                },
            ],
            (0..5)
                .map(|j| Item { id: format!("g{j}"), cost: num(1) })
                .collect(),
        )
        .unwrap();
        let alloc = Allocation {
            bundles: vec![set(&[0]), set(&[1, 2, 3, 4])],
            charity: ItemSet::new(),
        };
        assert!(matches!(
            construct_improvement_large_budget(&inst, &alloc, 0, 1, &set(&[1, 2, 3, 4]), &num(20)),
            Err(ConstructionError::EmptyLightPart)
        ));
    }
}

//! Brute-force oracles shared by the property and acceptance suites. These
//! deliberately avoid the library's search machinery: plain subset and
//! assignment enumeration, so agreement is meaningful.

#![allow(dead_code)]

use budget_fair::model::{Allocation, Instance, ItemSet, NswValue, Num};
use num_traits::{Signed, Zero};

/// Max value agent `envier` can see in an affordable subset of `envied`'s
/// bundle, by enumerating all subsets.
pub fn ef_oracle(inst: &Instance, alloc: &Allocation, envier: usize, envied: usize) -> Num {
    let items: Vec<usize> = alloc.bundles[envied].iter().copied().collect();
    assert!(items.len() <= 20, "oracle limited to 2^20 subsets");
    let budget = inst.budget(envier);
    let mut best = Num::zero();
    for mask in 0u64..(1 << items.len()) {
        let mut value = Num::zero();
        let mut cost = Num::zero();
        for (pos, &j) in items.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                value += inst.value(envier, j);
                cost += inst.cost(j);
            }
        }
        if &cost <= budget && value > best {
            best = value;
        }
    }
    best
}

/// Max EF1 deficit `v_i(S) - max_{g in S} v_ig` over affordable nonempty
/// subsets, by enumeration.
pub fn ef1_oracle(inst: &Instance, alloc: &Allocation, envier: usize, envied: usize) -> Num {
    let items: Vec<usize> = alloc.bundles[envied].iter().copied().collect();
    assert!(items.len() <= 20, "oracle limited to 2^20 subsets");
    let budget = inst.budget(envier);
    let mut best = Num::zero();
    for mask in 1u64..(1 << items.len()) {
        let mut value = Num::zero();
        let mut cost = Num::zero();
        let mut max: Option<Num> = None;
        for (pos, &j) in items.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                let v = inst.value(envier, j);
                value += v;
                cost += inst.cost(j);
                if max.as_ref().map(|m| v > m).unwrap_or(true) {
                    max = Some(v.clone());
                }
            }
        }
        if &cost > budget {
            continue;
        }
        let deficit = value - max.unwrap();
        if deficit > best {
            best = deficit;
        }
    }
    best
}

/// Exhaustive lexicographic Max-NSW value over all assignments.
pub fn nsw_oracle(inst: &Instance) -> NswValue {
    let n = inst.n();
    let m = inst.m();
    let mut best = NswValue::zero();
    let mut assignment = vec![0usize; m];
    'outer: loop {
        let mut values = vec![Num::zero(); n];
        let mut costs = vec![Num::zero(); n];
        for (j, &t) in assignment.iter().enumerate() {
            if t > 0 {
                values[t - 1] += inst.value(t - 1, j);
                costs[t - 1] += inst.cost(j);
            }
        }
        if (0..n).all(|i| &costs[i] <= inst.budget(i)) {
            let mut value = NswValue::zero();
            for v in &values {
                if v.is_positive() {
                    value.positive_count += 1;
                    value.product *= v;
                }
            }
            if value > best {
                best = value;
            }
        }
        for pos in 0..m {
            if assignment[pos] == n {
                assignment[pos] = 0;
                if pos + 1 == m {
                    break 'outer;
                }
            } else {
                assignment[pos] += 1;
                continue 'outer;
            }
        }
        if m == 0 {
            break;
        }
    }
    best
}

/// Checks the full EF1 definition at a given factor by brute force: for
/// every pair and every affordable subset there must be an item whose
/// removal brings the subset within `factor` of the envier's own value.
pub fn ef1_holds_at(inst: &Instance, alloc: &Allocation, factor: &Num) -> bool {
    for envier in 0..inst.n() {
        let own: Num = alloc.bundles[envier]
            .iter()
            .map(|&j| inst.value(envier, j).clone())
            .sum();
        for envied in 0..inst.n() {
            if envier == envied {
                continue;
            }
            let deficit = ef1_oracle(inst, alloc, envier, envied);
            if deficit.is_positive() && own < factor * &deficit {
                return false;
            }
        }
    }
    true
}

/// Feasible allocation built by walking items in index order and assigning
/// each to the bundle chosen by `pick` when it fits, else charity.
pub fn seeded_allocation(
    inst: &Instance,
    mut pick: impl FnMut(usize) -> usize,
) -> Allocation {
    let n = inst.n();
    let mut alloc = Allocation::empty(n);
    let mut costs = vec![Num::zero(); n];
    for j in 0..inst.m() {
        let t = pick(j);
        if t < n && &(&costs[t] + inst.cost(j)) <= inst.budget(t) {
            costs[t] += inst.cost(j);
            alloc.bundles[t].insert(j);
        } else {
            alloc.charity.insert(j);
        }
    }
    alloc
}

pub fn value_of(inst: &Instance, agent: usize, set: &ItemSet) -> Num {
    set.iter().map(|&j| inst.value(agent, j).clone()).sum()
}

pub fn cost_of(inst: &Instance, set: &ItemSet) -> Num {
    set.iter().map(|&j| inst.cost(j).clone()).sum()
}

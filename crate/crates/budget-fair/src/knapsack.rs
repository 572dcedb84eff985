//! Exact 0/1 knapsack over rational values and costs.
//!
//! Branch-and-bound with items sorted by density (value/cost) descending and
//! the fractional-relaxation upper bound for pruning. Zero-cost items with
//! positive value are always taken. The returned witness set is canonical:
//! the lexicographically smallest maximizer among sets of positively-valued
//! items, extracted by a second index-order pass once the optimum is known.

use num_traits::Zero;

use crate::model::{ItemSet, Num};

#[derive(Debug, Clone)]
pub(crate) struct KnapsackItem {
    pub index: usize,
    pub value: Num,
    pub cost: Num,
}

pub(crate) struct KnapsackResult {
    pub value: Num,
    pub set: ItemSet,
}

/// Maximizes total value over subsets of `items` with total cost at most
/// `capacity`. Items with zero value or with cost exceeding the capacity
/// never enter the witness set.
pub(crate) fn solve(items: &[KnapsackItem], capacity: &Num) -> KnapsackResult {
    let mut free = ItemSet::new();
    let mut free_value = Num::zero();
    let mut candidates: Vec<KnapsackItem> = Vec::new();
    for it in items {
        if it.value.is_zero() || &it.cost > capacity {
            continue;
        }
        if it.cost.is_zero() {
            free_value += &it.value;
            free.insert(it.index);
        } else {
            candidates.push(it.clone());
        }
    }

    // Everything fits: the maximizer over positive items is unique.
    let total_cost: Num = candidates.iter().map(|it| it.cost.clone()).sum();
    if &total_cost <= capacity {
        let mut set = free;
        let mut value = free_value;
        for it in &candidates {
            value += &it.value;
            set.insert(it.index);
        }
        return KnapsackResult { value, set };
    }

    // Density order for bounding and for the value search.
    let mut by_density = candidates.clone();
    by_density.sort_by(|a, b| {
        (&b.value * &a.cost)
            .cmp(&(&a.value * &b.cost))
            .then(a.index.cmp(&b.index))
    });

    let best = max_value(&by_density, capacity);

    // Canonical witness: walk candidates in index order, keeping an item iff
    // the optimum is still reachable with it forced in.
    candidates.sort_by_key(|it| it.index);
    let mut set = free;
    let mut chosen_value = Num::zero();
    let mut cap_left = capacity.clone();
    for pos in 0..candidates.len() {
        let it = &candidates[pos];
        if it.cost > cap_left {
            continue;
        }
        let mut suffix: Vec<KnapsackItem> = candidates[pos + 1..].to_vec();
        suffix.sort_by(|a, b| {
            (&b.value * &a.cost)
                .cmp(&(&a.value * &b.cost))
                .then(a.index.cmp(&b.index))
        });
        let rest = max_value(&suffix, &(&cap_left - &it.cost));
        if &chosen_value + &it.value + rest == best {
            chosen_value += &it.value;
            cap_left -= &it.cost;
            set.insert(it.index);
        }
    }
    debug_assert_eq!(chosen_value, best);
    KnapsackResult { value: best + free_value, set }
}

/// Best achievable value only. `items` must be sorted by density descending
/// and contain no zero-cost entries.
fn max_value(items: &[KnapsackItem], capacity: &Num) -> Num {
    let total_cost: Num = items.iter().map(|it| it.cost.clone()).sum();
    if &total_cost <= capacity {
        return items.iter().map(|it| it.value.clone()).sum();
    }
    let mut best = Num::zero();
    let mut taken = vec![false; items.len()];
    branch(items, 0, &Num::zero(), capacity, &mut taken, &mut best);
    best
}

fn branch(
    items: &[KnapsackItem],
    depth: usize,
    value: &Num,
    cap_left: &Num,
    taken: &mut Vec<bool>,
    best: &mut Num,
) {
    if depth == items.len() {
        if value > best {
            *best = value.clone();
        }
        return;
    }
    // Fractional relaxation over the remaining items.
    let mut bound = value.clone();
    let mut room = cap_left.clone();
    for it in &items[depth..] {
        if room.is_zero() {
            break;
        }
        if it.cost <= room {
            room -= &it.cost;
            bound += &it.value;
        } else {
            bound += &it.value * &room / &it.cost;
            room = Num::zero();
        }
    }
    if bound <= *best {
        return;
    }
    let it = &items[depth];
    if &it.cost <= cap_left {
        taken[depth] = true;
        branch(items, depth + 1, &(value + &it.value), &(cap_left - &it.cost), taken, best);
        taken[depth] = false;
    }
    branch(items, depth + 1, value, cap_left, taken, best);
}

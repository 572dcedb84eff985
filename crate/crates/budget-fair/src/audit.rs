//! Envy auditing under budget constraints.
//!
//! For a pair of agents (i, j), agent i's envy toward j is measured over
//! budget-affordable subsets of j's bundle. The EF measure is the best value
//! i can see in such a subset; the EF1 measure additionally removes the
//! subset's most valuable item. The auditor reports the exact approximation
//! factor `alpha = min over constrained pairs of v_i(X_i) / envy`, as an
//! uncapped rational, together with the worst witness.
//!
//! The EF1 subset search is solved by anchor decomposition: fix the item `a`
//! that will be the removed maximum, then run a standard knapsack over the
//! items valued at most `v_ia` with the remaining capacity. Ties in the
//! maximum are harmless since removing any maximum leaves the same value.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{Signed, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::knapsack::{self, KnapsackItem};
use crate::model::{
    assignment_count, bundle_value, format_num, is_feasible, Allocation, Instance,
    ItemSet, ModelError, Num,
};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("instance too large for exhaustive check ({0} assignments); use charity_swap_optimal instead")]
    LimitExceeded(String),
}

/// A witness of (approximate) envy from `envier` toward `envied`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvyWitness {
    pub envier: usize,
    pub envied: usize,
    pub set: ItemSet,
    /// For EF1 witnesses, the removed item: a maximum-value member of `set`
    /// under the envier's valuation. `None` for EF witnesses.
    pub removed_item: Option<usize>,
    /// `v_i(set)` for EF; `v_i(set) - max_{g in set} v_ig` for EF1.
    pub envy_value: Num,
}

impl EnvyWitness {
    pub fn to_json_value(&self) -> Value {
        json!({
            "envier": self.envier,
            "envied": self.envied,
            "set": self.set.iter().copied().collect::<Vec<_>>(),
            "removed_item": self.removed_item,
            "envy_value": format_num(&self.envy_value),
        })
    }
}

/// An approximation factor: an exact rational or "no pair constrains it".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Alpha {
    Finite(Num),
    Infinite,
}

impl Alpha {
    pub fn is_at_least(&self, threshold: &Num) -> bool {
        match self {
            Alpha::Finite(a) => a >= threshold,
            Alpha::Infinite => true,
        }
    }

    pub fn as_finite(&self) -> Option<&Num> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::Infinite => None,
        }
    }
}

impl PartialOrd for Alpha {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Alpha {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Alpha::Infinite, Alpha::Infinite) => Ordering::Equal,
            (Alpha::Infinite, Alpha::Finite(_)) => Ordering::Greater,
            (Alpha::Finite(_), Alpha::Infinite) => Ordering::Less,
            (Alpha::Finite(a), Alpha::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{}", format_num(a)),
            Alpha::Infinite => write!(f, "inf"),
        }
    }
}

/// Audit outcome: exact EF and EF1 factors with their worst witnesses, and
/// optionally a Pareto-optimality verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub ef_alpha: Alpha,
    pub ef1_alpha: Alpha,
    pub ef_witness: Option<EnvyWitness>,
    pub ef1_witness: Option<EnvyWitness>,
    pub po: Option<bool>,
}

impl AuditReport {
    pub fn to_json_value(&self) -> Value {
        json!({
            "ef_alpha": self.ef_alpha.to_string(),
            "ef1_alpha": self.ef1_alpha.to_string(),
            "ef_witness": self.ef_witness.as_ref().map(|w| w.to_json_value()),
            "ef1_witness": self.ef1_witness.as_ref().map(|w| w.to_json_value()),
            "po": self.po,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json_value()).unwrap()
    }
}

fn check_pair(inst: &Instance, envier: usize, envied: usize) -> Result<(), ModelError> {
    if envier >= inst.n() || envied >= inst.n() {
        return Err(ModelError::IndexOutOfRange(format!(
            "agent pair ({envier}, {envied})"
        )));
    }
    if envier == envied {
        return Err(ModelError::IndexOutOfRange("envier equals envied".into()));
    }
    Ok(())
}

/// Maximum value agent `envier` sees in any affordable subset of `envied`'s
/// bundle, with an argmax subset. `(0, {})` when nothing affordable is
/// valued.
pub fn max_envy_ef(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
) -> Result<(Num, ItemSet), AuditError> {
    check_pair(inst, envier, envied)?;
    let items: Vec<KnapsackItem> = alloc.bundles[envied]
        .iter()
        .map(|&j| KnapsackItem {
            index: j,
            value: inst.value(envier, j).clone(),
            cost: inst.cost(j).clone(),
        })
        .collect();
    let r = knapsack::solve(&items, inst.budget(envier));
    Ok((r.value, r.set))
}

/// Maximum EF1 deficit `D = max over affordable nonempty S of
/// (v_i(S) - max_{g in S} v_ig)`, with a canonical witness when `D > 0`.
pub fn max_envy_ef1(
    inst: &Instance,
    alloc: &Allocation,
    envier: usize,
    envied: usize,
) -> Result<(Num, Option<EnvyWitness>), AuditError> {
    check_pair(inst, envier, envied)?;
    let budget = inst.budget(envier);
    let bundle: Vec<usize> = alloc.bundles[envied].iter().copied().collect();
    let mut best_d = Num::zero();
    let mut best: Option<EnvyWitness> = None;
    for &anchor in &bundle {
        if inst.cost(anchor) > budget {
            continue;
        }
        let anchor_value = inst.value(envier, anchor);
        let rest: Vec<KnapsackItem> = bundle
            .iter()
            .filter(|&&g| g != anchor && inst.value(envier, g) <= anchor_value)
            .map(|&g| KnapsackItem {
                index: g,
                value: inst.value(envier, g).clone(),
                cost: inst.cost(g).clone(),
            })
            .collect();
        let capacity = budget - inst.cost(anchor);
        let r = knapsack::solve(&rest, &capacity);
        if r.value.is_zero() {
            continue;
        }
        let mut set = r.set;
        set.insert(anchor);
        let candidate = EnvyWitness {
            envier,
            envied,
            set,
            removed_item: Some(anchor),
            envy_value: r.value.clone(),
        };
        let replace = match &best {
            None => true,
            Some(w) => r.value > best_d || (r.value == best_d && candidate.set < w.set),
        };
        if replace {
            best_d = r.value;
            best = Some(candidate);
        }
    }
    Ok((best_d, best))
}

/// Computes the exact EF and EF1 approximation factors over all ordered
/// agent pairs, with worst witnesses, and optionally the PO verdict.
pub fn audit_allocation(
    inst: &Instance,
    alloc: &Allocation,
    check_po: bool,
    po_limit: u64,
) -> Result<AuditReport, AuditError> {
    if !is_feasible(inst, alloc)? {
        return Err(AuditError::Infeasible("allocation exceeds a budget".into()));
    }
    let mut ef_alpha = Alpha::Infinite;
    let mut ef1_alpha = Alpha::Infinite;
    let mut ef_witness = None;
    let mut ef1_witness = None;
    for envier in 0..inst.n() {
        let own = bundle_value(inst, envier, &alloc.bundles[envier])?;
        for envied in 0..inst.n() {
            if envier == envied {
                continue;
            }
            let (envy, set) = max_envy_ef(inst, alloc, envier, envied)?;
            if envy.is_positive() {
                let alpha = Alpha::Finite(&own / &envy);
                if alpha < ef_alpha {
                    ef_alpha = alpha;
                    ef_witness = Some(EnvyWitness {
                        envier,
                        envied,
                        set,
                        removed_item: None,
                        envy_value: envy,
                    });
                }
            }
            let (deficit, witness) = max_envy_ef1(inst, alloc, envier, envied)?;
            if deficit.is_positive() {
                let alpha = Alpha::Finite(&own / &deficit);
                if alpha < ef1_alpha {
                    ef1_alpha = alpha;
                    ef1_witness = witness;
                }
            }
        }
    }
    let po = if check_po {
        Some(is_pareto_optimal(inst, alloc, po_limit)?)
    } else {
        None
    };
    Ok(AuditReport { ef_alpha, ef1_alpha, ef_witness, ef1_witness, po })
}

/// Exhaustive Pareto-optimality check over all `(n+1)^m` assignments.
/// Errors when the instance exceeds `limit`.
pub fn is_pareto_optimal(
    inst: &Instance,
    alloc: &Allocation,
    limit: u64,
) -> Result<bool, AuditError> {
    if !is_feasible(inst, alloc)? {
        return Err(AuditError::Infeasible("allocation exceeds a budget".into()));
    }
    match assignment_count(inst.n(), inst.m()) {
        Some(total) if total <= limit => {}
        _ => {
            return Err(AuditError::LimitExceeded(format!(
                "(n+1)^m with n={} m={} exceeds {limit}",
                inst.n(),
                inst.m()
            )))
        }
    }
    let n = inst.n();
    let m = inst.m();
    let current: Vec<Num> = (0..n)
        .map(|i| bundle_value(inst, i, &alloc.bundles[i]))
        .collect::<Result<_, _>>()?;
    // Suffix value totals: the most agent i could still gain from items d..m.
    let mut suffix: Vec<Vec<Num>> = vec![vec![Num::zero(); m + 1]; n];
    for i in 0..n {
        for d in (0..m).rev() {
            suffix[i][d] = &suffix[i][d + 1] + inst.value(i, d);
        }
    }

    struct Search<'a> {
        inst: &'a Instance,
        current: &'a [Num],
        suffix: &'a [Vec<Num>],
        values: Vec<Num>,
        costs: Vec<Num>,
    }

    impl Search<'_> {
        /// True iff some completion weakly dominates with a strict gain.
        fn dominates(&mut self, depth: usize) -> bool {
            let n = self.inst.n();
            for i in 0..n {
                if &self.values[i] + &self.suffix[i][depth] < self.current[i] {
                    return false;
                }
            }
            if depth == self.inst.m() {
                return (0..n).any(|i| self.values[i] > self.current[i]);
            }
            // Charity branch first, then each agent.
            if self.dominates(depth + 1) {
                return true;
            }
            for i in 0..n {
                let cost = self.inst.cost(depth);
                if &(&self.costs[i] + cost) > self.inst.budget(i) {
                    continue;
                }
                self.values[i] += self.inst.value(i, depth);
                self.costs[i] += cost;
                let found = self.dominates(depth + 1);
                self.values[i] -= self.inst.value(i, depth);
                self.costs[i] -= self.inst.cost(depth);
                if found {
                    return true;
                }
            }
            false
        }
    }

    let mut search = Search {
        inst,
        current: &current,
        suffix: &suffix,
        values: vec![Num::zero(); n],
        costs: vec![Num::zero(); n],
    };
    Ok(!search.dominates(0))
}

/// Necessary PO condition usable at any scale: agent `agent` cannot gain by
/// swapping her bundle for any affordable subset of her bundle plus charity.
pub fn charity_swap_optimal(
    inst: &Instance,
    alloc: &Allocation,
    agent: usize,
) -> Result<bool, AuditError> {
    if agent >= inst.n() {
        return Err(AuditError::Model(ModelError::IndexOutOfRange(format!(
            "agent {agent}"
        ))));
    }
    let own = bundle_value(inst, agent, &alloc.bundles[agent])?;
    let pool: Vec<KnapsackItem> = alloc.bundles[agent]
        .iter()
        .chain(alloc.charity.iter())
        .map(|&j| KnapsackItem {
            index: j,
            value: inst.value(agent, j).clone(),
            cost: inst.cost(j).clone(),
        })
        .collect();
    let r = knapsack::solve(&pool, inst.budget(agent));
    Ok(r.value <= own)
}

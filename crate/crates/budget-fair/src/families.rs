//! Named instance families with known optimal structure, plus a seeded
//! random generator.
//!
//! The three named families each come with a reference allocation:
//!
//! * `tight-quarter(eps)`: two agents with identical valuations and budget
//!   1; one item of value `1+eps` and cost 1, and `1/eps` items of value
//!   `4*eps` and cost `eps`. The reference allocation gives the big item to
//!   agent 1 and all small items to agent 2.
//! * `large-budget-tight(kappa)`: two agents with budget `kappa` and
//!   `2*kappa` unit-cost items, the first half valued (1, 0) and the second
//!   half (2, 2). Reference allocation: first half to agent 1, second half
//!   to agent 2.
//! * `approx-gap(kappa)`: identical valuations, budget `kappa`, `2*kappa`
//!   unit-cost items, half valued 1 and half valued 1/5. Reference
//!   allocation: the value-1 items to agent 1, the rest to agent 2.

use num_bigint::BigInt;
use num_traits::Signed;
use thiserror::Error;

use crate::model::{kappa, num, ratio, Agent, Allocation, Instance, Item, ItemSet, Num};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilySpec {
    /// `eps` must be the reciprocal of a positive integer.
    TightQuarter { eps: Num },
    LargeBudgetTight { kappa: u64 },
    ApproxGap { kappa: u64 },
    Random { n: usize, m: usize, kappa_target: u64, seed: u64 },
}

/// Generated instance plus, for the named families, the reference
/// allocation the family is built around.
pub struct Family {
    pub instance: Instance,
    pub reference: Option<Allocation>,
}

pub fn generate(spec: &FamilySpec) -> Result<Family, FamilyError> {
    match spec {
        FamilySpec::TightQuarter { eps } => tight_quarter(eps),
        FamilySpec::LargeBudgetTight { kappa } => large_budget_tight(*kappa),
        FamilySpec::ApproxGap { kappa } => approx_gap(*kappa),
        FamilySpec::Random { n, m, kappa_target, seed } => Ok(Family {
            instance: generate_random(*n, *m, *kappa_target, *seed)?,
            reference: None,
        }),
    }
}

fn tight_quarter(eps: &Num) -> Result<Family, FamilyError> {
    if !eps.is_positive() {
        return Err(FamilyError::InvalidParams("eps must be positive".into()));
    }
    let inv = eps.recip();
    if !inv.is_integer() {
        return Err(FamilyError::InvalidParams("1/eps must be an integer".into()));
    }
    let count: usize = inv
        .to_integer()
        .try_into()
        .map_err(|_| FamilyError::InvalidParams("1/eps too large".into()))?;
    let one = num(1);
    let mut values = vec![&one + eps];
    values.extend(std::iter::repeat(eps * num(4)).take(count));
    let agents = (0..2)
        .map(|i| Agent {
            id: format!("a{}", i + 1),
            budget: num(1),
            values: values.clone(),
        })
        .collect();
    let mut items = vec![Item { id: "g0".into(), cost: num(1) }];
    items.extend((0..count).map(|j| Item {
        id: format!("g{}", j + 1),
        cost: eps.clone(),
    }));
    let instance = Instance::new(agents, items).expect("family construction is valid");
    let reference = Allocation {
        bundles: vec![ItemSet::from([0]), (1..=count).collect()],
        charity: ItemSet::new(),
    };
    Ok(Family { instance, reference: Some(reference) })
}

fn large_budget_tight(k: u64) -> Result<Family, FamilyError> {
    if k < 1 {
        return Err(FamilyError::InvalidParams("kappa must be at least 1".into()));
    }
    let k = k as usize;
    let m = 2 * k;
    let agents = vec![
        Agent {
            id: "a1".into(),
            budget: num(k as i64),
            values: (0..m).map(|j| if j < k { num(1) } else { num(2) }).collect(),
        },
        Agent {
            id: "a2".into(),
            budget: num(k as i64),
            values: (0..m).map(|j| if j < k { num(0) } else { num(2) }).collect(),
        },
    ];
    let items = (0..m)
        .map(|j| Item { id: format!("g{j}"), cost: num(1) })
        .collect();
    let instance = Instance::new(agents, items).expect("family construction is valid");
    let reference = Allocation {
        bundles: vec![(0..k).collect(), (k..m).collect()],
        charity: ItemSet::new(),
    };
    Ok(Family { instance, reference: Some(reference) })
}

fn approx_gap(k: u64) -> Result<Family, FamilyError> {
    if k < 1 {
        return Err(FamilyError::InvalidParams("kappa must be at least 1".into()));
    }
    let k = k as usize;
    let m = 2 * k;
    let values: Vec<Num> = (0..m)
        .map(|j| if j < k { num(1) } else { ratio(1, 5) })
        .collect();
    let agents = (0..2)
        .map(|i| Agent {
            id: format!("a{}", i + 1),
            budget: num(k as i64),
            values: values.clone(),
        })
        .collect();
    let items = (0..m)
        .map(|j| Item { id: format!("g{j}"), cost: num(1) })
        .collect();
    let instance = Instance::new(agents, items).expect("family construction is valid");
    let reference = Allocation {
        bundles: vec![(0..k).collect(), (k..m).collect()],
        charity: ItemSet::new(),
    };
    Ok(Family { instance, reference: Some(reference) })
}

/// Seeded random instance: costs are rationals in [4/5, 6/5] with
/// denominator 100, values are rationals in [0, 100] with denominator 100,
/// and every budget equals `kappa_target * max cost`, which pins the
/// budget-cost ratio exactly. Fully reproducible from the seed via
/// SplitMix64.
pub fn generate_random(
    n: usize,
    m: usize,
    kappa_target: u64,
    seed: u64,
) -> Result<Instance, FamilyError> {
    if n < 1 || m < 1 || kappa_target < 1 {
        return Err(FamilyError::InvalidParams(
            "need n >= 1, m >= 1, kappa_target >= 1".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let items: Vec<Item> = (0..m)
        .map(|j| Item {
            id: format!("g{j}"),
            cost: ratio(80 + rng.next_below(41) as i64, 100),
        })
        .collect();
    let max_cost = items.iter().map(|it| &it.cost).max().unwrap().clone();
    let budget = &max_cost * num(kappa_target as i64);
    let agents: Vec<Agent> = (0..n)
        .map(|i| Agent {
            id: format!("a{i}"),
            budget: budget.clone(),
            values: (0..m)
                .map(|_| ratio(rng.next_below(10_001) as i64, 100))
                .collect(),
        })
        .collect();
    let instance = Instance::new(agents, items).expect("random construction is valid");
    debug_assert_eq!(kappa(&instance).unwrap(), BigInt::from(kappa_target));
    Ok(instance)
}

//! Budget-feasible fair allocation toolkit.
//!
//! Items have costs, agents have budgets and additive valuations, and
//! unallocated items go to a charity bundle. The crate provides:
//!
//! * exact rational domain types and JSON (de)serialization ([`model`]),
//! * an exact lexicographic Max-NSW solver and a local-search baseline
//!   ([`solver`]),
//! * envy auditing: the exact approximation factors of envy-freeness and
//!   envy-freeness-up-to-one-item under budget constraints, plus Pareto
//!   optimality checks ([`audit`]),
//! * the constructive machinery that turns envy violations into strictly
//!   better allocations ([`constructions`]),
//! * generators for the tight instance families and seeded random instances
//!   ([`families`]).
//!
//! All core logic is exact (arbitrary-precision rationals) and
//! deterministic: sorting ties are broken by index, witness sets are
//! canonical, and random generation is pinned to SplitMix64.

pub mod audit;
pub mod constructions;
pub mod families;
mod knapsack;
pub mod model;
pub mod rng;
pub mod solver;

pub use audit::{audit_allocation, Alpha, AuditError, AuditReport, EnvyWitness};
pub use model::{
    bundle_cost, bundle_value, is_feasible, kappa, load_instance, nsw, Allocation, Instance,
    ItemSet, ModelError, NswValue, Num,
};
pub use solver::{solve_exact, solve_local_search, SolveError, SolveResult};

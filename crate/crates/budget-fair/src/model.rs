//! Core domain types: exact rational numbers, instances, allocations, and the
//! lexicographic Nash social welfare value.
//!
//! All quantities (budgets, costs, values) are arbitrary-precision rationals;
//! there is no floating point anywhere in the allocation logic, so ratio
//! comparisons like "exactly 1/4" are decidable.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

/// Exact rational number. `BigRational` keeps fractions reduced with a
/// positive denominator, which is the canonical form we rely on.
pub type Num = BigRational;

/// A set of item indices (0-based, in instance order). `BTreeSet` gives
/// deterministic iteration and lexicographic `Ord` for tie-breaking.
pub type ItemSet = BTreeSet<usize>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("not a partition: {0}")]
    PartitionViolation(String),
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("kappa undefined: {0}")]
    KappaUndefined(String),
}

/// Shorthand for an integer rational.
pub fn num(n: i64) -> Num {
    BigRational::from_integer(BigInt::from(n))
}

/// Shorthand for the rational `p/q`. Panics on `q == 0`.
pub fn ratio(p: i64, q: i64) -> Num {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn format_num(x: &Num) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses `"p/q"`, integers, and finite decimals (including exponent forms
/// like `2.5e-3`) into an exact rational.
pub fn parse_num(s: &str) -> Result<Num, ModelError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(ModelError::Parse("empty number".into()));
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p
            .trim()
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad numerator in {s:?}")))?;
        let q: BigInt = q
            .trim()
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad denominator in {s:?}")))?;
        if q.is_zero() {
            return Err(ModelError::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(p, q));
    }
    parse_decimal(s).ok_or_else(|| ModelError::Parse(format!("not a number: {s:?}")))
}

/// Exact decimal parser: `-12`, `0.25`, `1e3`, `2.5E-3`.
fn parse_decimal(s: &str) -> Option<Num> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().ok()?;
            (&s[..pos], e)
        }
        None => (s, 0i64),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let unscaled: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(unscaled * sign);
    if scale >= 0 {
        value *= BigRational::from_integer(ten.pow(scale as u32));
    } else {
        value /= BigRational::from_integer(ten.pow((-scale) as u32));
    }
    Some(value)
}

/// Largest rational with denominator `denom` whose fourth power is at most
/// `x`. Used to lower-bound fourth roots without leaving exact arithmetic.
pub fn fourth_root_lower_bound(x: &BigInt, denom: u64) -> Num {
    assert!(!x.is_negative(), "fourth root of negative value");
    let d = BigInt::from(denom);
    let scaled = x * d.pow(4u32);
    BigRational::new(scaled.nth_root(4), d)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Agent {
    pub id: String,
    pub budget: Num,
    pub values: Vec<Num>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: String,
    pub cost: Num,
}

/// A budget-feasible allocation problem: agents with budgets and additive
/// value vectors, items with costs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub agents: Vec<Agent>,
    pub items: Vec<Item>,
}

impl Instance {
    pub fn new(agents: Vec<Agent>, items: Vec<Item>) -> Result<Self, ModelError> {
        let inst = Instance { agents, items };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.items.len()
    }

    pub fn value(&self, agent: usize, item: usize) -> &Num {
        &self.agents[agent].values[item]
    }

    pub fn cost(&self, item: usize) -> &Num {
        &self.items[item].cost
    }

    pub fn budget(&self, agent: usize) -> &Num {
        &self.agents[agent].budget
    }

    fn validate(&self) -> Result<(), ModelError> {
        let m = self.items.len();
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if a.budget.is_negative() {
                return Err(ModelError::Validation(format!(
                    "agent {} has negative budget",
                    a.id
                )));
            }
            if a.values.len() != m {
                return Err(ModelError::Validation(format!(
                    "agent {} has {} values for {} items",
                    a.id,
                    a.values.len(),
                    m
                )));
            }
            if a.values.iter().any(|v| v.is_negative()) {
                return Err(ModelError::Validation(format!(
                    "agent {} has a negative value",
                    a.id
                )));
            }
            if !ids.insert(a.id.clone()) {
                return Err(ModelError::Validation(format!("duplicate agent id {}", a.id)));
            }
        }
        let mut ids = BTreeSet::new();
        for it in &self.items {
            if it.cost.is_negative() {
                return Err(ModelError::Validation(format!(
                    "item {} has negative cost",
                    it.id
                )));
            }
            if !ids.insert(it.id.clone()) {
                return Err(ModelError::Validation(format!("duplicate item id {}", it.id)));
            }
        }
        Ok(())
    }

    /// Parses the instance JSON format. Numbers may be JSON numbers
    /// (integers or finite decimals, parsed exactly) or `"p/q"` strings.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| ModelError::Parse("instance must be a JSON object".into()))?;
        let agents_v = obj
            .get("agents")
            .and_then(Value::as_array)
            .ok_or_else(|| ModelError::Parse("missing \"agents\" array".into()))?;
        let items_v = obj
            .get("items")
            .and_then(Value::as_array)
            .ok_or_else(|| ModelError::Parse("missing \"items\" array".into()))?;

        let mut items = Vec::with_capacity(items_v.len());
        for (j, it) in items_v.iter().enumerate() {
            let o = it
                .as_object()
                .ok_or_else(|| ModelError::Parse(format!("item {j} must be an object")))?;
            let id = o
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| ModelError::Parse(format!("item {j} missing id")))?
                .to_string();
            let cost = json_num(o.get("cost"), &format!("item {id} cost"))?;
            items.push(Item { id, cost });
        }
        let mut agents = Vec::with_capacity(agents_v.len());
        for (i, ag) in agents_v.iter().enumerate() {
            let o = ag
                .as_object()
                .ok_or_else(|| ModelError::Parse(format!("agent {i} must be an object")))?;
            let id = o
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| ModelError::Parse(format!("agent {i} missing id")))?
                .to_string();
            let budget = json_num(o.get("budget"), &format!("agent {id} budget"))?;
            let values_v = o
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| ModelError::Parse(format!("agent {id} missing values")))?;
            let mut values = Vec::with_capacity(values_v.len());
            for (j, v) in values_v.iter().enumerate() {
                values.push(json_num(Some(v), &format!("agent {id} value {j}"))?);
            }
            agents.push(Agent { id, budget, values });
        }
        Instance::new(agents, items)
    }

    pub fn to_json_string(&self) -> String {
        let agents: Vec<Value> = self
            .agents
            .iter()
            .map(|a| {
                json!({
                    "id": a.id,
                    "budget": format_num(&a.budget),
                    "values": a.values.iter().map(format_num).collect::<Vec<_>>(),
                })
            })
            .collect();
        let items: Vec<Value> = self
            .items
            .iter()
            .map(|it| json!({"id": it.id, "cost": format_num(&it.cost)}))
            .collect();
        serde_json::to_string(&json!({"agents": agents, "items": items})).unwrap()
    }
}

fn json_num(v: Option<&Value>, ctx: &str) -> Result<Num, ModelError> {
    match v {
        Some(Value::String(s)) => parse_num(s),
        // serde_json's arbitrary_precision keeps the literal text, so finite
        // decimals convert exactly instead of through f64.
        Some(Value::Number(n)) => parse_num(&n.to_string()),
        Some(_) => Err(ModelError::Parse(format!("{ctx}: expected number or string"))),
        None => Err(ModelError::Parse(format!("{ctx}: missing"))),
    }
}

/// Loads an instance from raw bytes. JSON is the only supported format.
pub fn load_instance(text: &[u8]) -> Result<Instance, ModelError> {
    let s = std::str::from_utf8(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    Instance::from_json_str(s)
}

/// An allocation: one bundle per agent plus the charity bundle holding the
/// unallocated items. Together they must partition `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub bundles: Vec<ItemSet>,
    pub charity: ItemSet,
}

impl Allocation {
    pub fn empty(n: usize) -> Self {
        Allocation {
            bundles: vec![ItemSet::new(); n],
            charity: ItemSet::new(),
        }
    }

    /// All items to charity.
    pub fn all_charity(n: usize, m: usize) -> Self {
        Allocation {
            bundles: vec![ItemSet::new(); n],
            charity: (0..m).collect(),
        }
    }

    /// Checks that the bundles plus charity form a partition of `0..m` with
    /// one bundle per agent.
    pub fn check_partition(&self, n: usize, m: usize) -> Result<(), ModelError> {
        if self.bundles.len() != n {
            return Err(ModelError::PartitionViolation(format!(
                "{} bundles for {} agents",
                self.bundles.len(),
                n
            )));
        }
        let mut seen = vec![false; m];
        for set in self.bundles.iter().chain(std::iter::once(&self.charity)) {
            for &j in set {
                if j >= m {
                    return Err(ModelError::PartitionViolation(format!(
                        "item index {j} out of range (m = {m})"
                    )));
                }
                if seen[j] {
                    return Err(ModelError::PartitionViolation(format!(
                        "item {j} appears in two bundles"
                    )));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|&s| !s) {
            return Err(ModelError::PartitionViolation(format!("item {j} unallocated")));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| ModelError::Parse("allocation must be a JSON object".into()))?;
        let read_set = |v: &Value, ctx: &str| -> Result<ItemSet, ModelError> {
            let arr = v
                .as_array()
                .ok_or_else(|| ModelError::Parse(format!("{ctx}: expected array")))?;
            arr.iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| ModelError::Parse(format!("{ctx}: bad item index")))
                })
                .collect()
        };
        let bundles_v = obj
            .get("bundles")
            .and_then(Value::as_array)
            .ok_or_else(|| ModelError::Parse("missing \"bundles\" array".into()))?;
        let bundles = bundles_v
            .iter()
            .enumerate()
            .map(|(i, b)| read_set(b, &format!("bundle {i}")))
            .collect::<Result<Vec<_>, _>>()?;
        let charity = match obj.get("charity") {
            Some(v) => read_set(v, "charity")?,
            None => ItemSet::new(),
        };
        Ok(Allocation { bundles, charity })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json_value()).unwrap()
    }

    pub fn to_json_value(&self) -> Value {
        json!({
            "bundles": self.bundles.iter().map(|b| b.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "charity": self.charity.iter().copied().collect::<Vec<_>>(),
        })
    }
}

/// Lexicographic Nash social welfare: first the number of agents with
/// positive bundle value, then the product of those positive values.
/// The product of an empty set is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NswValue {
    pub positive_count: usize,
    pub product: Num,
}

impl NswValue {
    pub fn zero() -> Self {
        NswValue {
            positive_count: 0,
            product: Num::one(),
        }
    }
}

impl PartialOrd for NswValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NswValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.positive_count
            .cmp(&other.positive_count)
            .then_with(|| self.product.cmp(&other.product))
    }
}

impl fmt::Display for NswValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} positive, product {})", self.positive_count, format_num(&self.product))
    }
}

/// Sum of agent `agent`'s values over the items of `set`.
pub fn bundle_value(inst: &Instance, agent: usize, set: &ItemSet) -> Result<Num, ModelError> {
    if agent >= inst.n() {
        return Err(ModelError::IndexOutOfRange(format!("agent {agent}")));
    }
    let mut total = Num::zero();
    for &j in set {
        if j >= inst.m() {
            return Err(ModelError::IndexOutOfRange(format!("item {j}")));
        }
        total += inst.value(agent, j);
    }
    Ok(total)
}

/// Sum of item costs over `set`.
pub fn bundle_cost(inst: &Instance, set: &ItemSet) -> Result<Num, ModelError> {
    let mut total = Num::zero();
    for &j in set {
        if j >= inst.m() {
            return Err(ModelError::IndexOutOfRange(format!("item {j}")));
        }
        total += inst.cost(j);
    }
    Ok(total)
}

/// True iff every agent's bundle cost is within her budget. A partition
/// violation is an error, not `false`.
pub fn is_feasible(inst: &Instance, alloc: &Allocation) -> Result<bool, ModelError> {
    alloc.check_partition(inst.n(), inst.m())?;
    for (i, bundle) in alloc.bundles.iter().enumerate() {
        if &bundle_cost(inst, bundle)? > inst.budget(i) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Lexicographic NSW of a feasible allocation.
pub fn nsw(inst: &Instance, alloc: &Allocation) -> Result<NswValue, ModelError> {
    if !is_feasible(inst, alloc)? {
        return Err(ModelError::Infeasible("allocation exceeds a budget".into()));
    }
    let mut value = NswValue::zero();
    for (i, bundle) in alloc.bundles.iter().enumerate() {
        let v = bundle_value(inst, i, bundle)?;
        if v.is_positive() {
            value.positive_count += 1;
            value.product *= v;
        }
    }
    Ok(value)
}

/// Budget-cost ratio: `floor(min_i B_i / max_j c_j)`, the number of items it
/// takes at minimum to exhaust any budget. Undefined if some cost is zero.
pub fn kappa(inst: &Instance) -> Result<BigInt, ModelError> {
    if inst.n() == 0 || inst.m() == 0 {
        return Err(ModelError::KappaUndefined("need at least one agent and one item".into()));
    }
    if inst.items.iter().any(|it| it.cost.is_zero()) {
        return Err(ModelError::KappaUndefined("zero-cost item present".into()));
    }
    let min_budget = inst.agents.iter().map(|a| &a.budget).min().unwrap();
    let max_cost = inst.items.iter().map(|it| &it.cost).max().unwrap();
    Ok((min_budget / max_cost).floor().to_integer())
}

/// Converts `(n+1)^m` to `u64` when it fits; `None` means "too large".
pub fn assignment_count(n: usize, m: usize) -> Option<u64> {
    let base = (n as u64).checked_add(1)?;
    let mut total: u64 = 1;
    for _ in 0..m {
        total = total.checked_mul(base)?;
    }
    Some(total)
}

/// Exposes `to_f64` for reporting; never used in allocation logic.
pub fn num_to_f64(x: &Num) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

//! Subcommand implementations and exit-code policy.
//!
//! Exit codes: 0 ok, 1 no-op (no witness found), 2 input error, 3 resource
//! limit, 4 infeasible allocation, 5 verification failure, 6 degenerate
//! construction.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::Signed;
use serde_json::json;

use budget_fair::audit::{audit_allocation, AuditError};
use budget_fair::constructions::{
    construct_improvement_large_budget, construct_improvement_quarter,
    construct_improvement_warmup, ConstructionError,
};
use budget_fair::families::{generate, generate_random, FamilySpec};
use budget_fair::model::{
    format_num, fourth_root_lower_bound, kappa, parse_num, ratio, Num,
};
use budget_fair::solver::{
    solve_exact, solve_local_search, verify_quarter_floor, SolveError, DEFAULT_NODE_LIMIT,
};
use budget_fair::{nsw, Allocation, Instance, ModelError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NO_WITNESS: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_ASSERTION: u8 = 5;
pub const EXIT_DEGENERATE: u8 = 6;

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_INPUT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let code = match &e {
            AuditError::Infeasible(_) => EXIT_INFEASIBLE,
            AuditError::LimitExceeded(_) => EXIT_LIMIT,
            AuditError::Model(m) => return CliError::from_model_in_audit(m),
        };
        CliError::new(code, e.to_string())
    }
}

impl CliError {
    fn from_model_in_audit(e: &ModelError) -> Self {
        let code = match e {
            ModelError::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_INPUT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Model(m) => m.into(),
            SolveError::Audit(a) => a.into(),
            SolveError::NodeLimitExceeded { .. } => CliError::new(EXIT_LIMIT, e.to_string()),
            SolveError::PositiveCountMismatch { .. } => CliError::new(EXIT_INPUT, e.to_string()),
        }
    }
}

impl From<ConstructionError> for CliError {
    fn from(e: ConstructionError) -> Self {
        match e {
            ConstructionError::Model(m) => m.into(),
            _ => CliError::new(EXIT_DEGENERATE, e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "budget-fair",
    about = "Budget-feasible Max-NSW allocation: solve, audit envy, verify, sweep, generate, improve"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SolveMethod {
    Exact,
    LocalSearch,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ImproveVariant {
    Quarter,
    Warmup,
    LargeBudget,
}

#[derive(Subcommand)]
pub enum Command {
    /// Compute a Max-NSW allocation (exact branch-and-bound or local search).
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        method: SolveMethod,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the local-search method.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Iteration cap for the local-search method.
        #[arg(long, default_value_t = 10_000)]
        max_iters: u64,
    },
    /// Audit the exact EF and EF1 approximation factors of an allocation.
    Audit {
        instance: PathBuf,
        allocation: PathBuf,
        /// Also run the exhaustive Pareto-optimality check.
        #[arg(long)]
        po: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve exactly, audit the optimum, and check the 1/4 EF1 floor plus PO.
    Verify { instance: PathBuf },
    /// Table the EF1 factor of a family against the large-budget bound.
    Sweep {
        #[arg(long)]
        family: String,
        /// Comma-separated kappa values.
        #[arg(long)]
        kappas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a named family or a seeded random instance.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Search for an envy violation at a variant's factor and apply the
    /// matching improvement construction.
    Improve {
        instance: PathBuf,
        allocation: PathBuf,
        #[arg(long, value_enum)]
        variant: ImproveVariant,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum GenFamily {
    /// Two agents, one expensive item, 1/eps cheap items; tight at 1/4.
    TightQuarter {
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alloc_out: Option<PathBuf>,
    },
    /// Unit costs, budget kappa; approaches the 1/2 bound as kappa grows.
    LargeBudgetTight {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alloc_out: Option<PathBuf>,
    },
    /// Identical valuations with a 5/9 NSW gap at the split allocation.
    ApproxGap {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alloc_out: Option<PathBuf>,
    },
    /// Seeded random instance with a pinned budget-cost ratio.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        kappa: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn node_limit() -> Result<u64, CliError> {
    match std::env::var("BUDGET_FAIR_NODE_LIMIT") {
        Ok(s) => s
            .parse()
            .map_err(|_| CliError::new(EXIT_INPUT, format!("bad BUDGET_FAIR_NODE_LIMIT: {s:?}"))),
        Err(_) => Ok(DEFAULT_NODE_LIMIT),
    }
}

fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    Ok(Instance::from_json_str(&text)?)
}

fn read_allocation(path: &Path) -> Result<Allocation, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    Ok(Allocation::from_json_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve { instance, method, out, seed, max_iters } => {
            let inst = read_instance(&instance)?;
            let result = match method {
                SolveMethod::Exact => solve_exact(&inst, node_limit()?)?,
                SolveMethod::LocalSearch => solve_local_search(&inst, seed, max_iters)?,
            };
            write_text(&out, &result.to_json_string())?;
            println!(
                "nsw: {} ({})",
                result.nsw,
                if result.exact { "exact" } else { "not proven optimal" }
            );
            if matches!(method, SolveMethod::Exact) && !result.exact {
                return Ok(EXIT_LIMIT);
            }
            Ok(EXIT_OK)
        }
        Command::Audit { instance, allocation, po, out } => {
            let inst = read_instance(&instance)?;
            let alloc = read_allocation(&allocation)?;
            let report = audit_allocation(&inst, &alloc, po, 2_000_000)?;
            write_text(&out, &report.to_json_string())?;
            println!("ef_alpha: {}", report.ef_alpha);
            println!("ef1_alpha: {}", report.ef1_alpha);
            if let Some(po) = report.po {
                println!("po: {po}");
            }
            Ok(EXIT_OK)
        }
        Command::Verify { instance } => {
            let inst = read_instance(&instance)?;
            let report = verify_quarter_floor(&inst, 2_000_000)?;
            println!("optimum nsw: {}", report.solve.nsw);
            println!("ef1_alpha: {} (floor 1/4)", report.audit.ef1_alpha);
            println!("po: {}", report.po_ok);
            if report.passed {
                println!("verify: PASS");
                Ok(EXIT_OK)
            } else {
                println!("verify: FAIL");
                println!("counterexample allocation: {}", report.solve.allocation.to_json_string());
                println!("audit: {}", report.audit.to_json_string());
                Ok(EXIT_ASSERTION)
            }
        }
        Command::Sweep { family, kappas, out } => {
            if family != "large-budget-tight" {
                return Err(CliError::new(EXIT_INPUT, format!("unknown sweep family {family:?}")));
            }
            let kappa_list: Vec<u64> = kappas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::new(EXIT_INPUT, format!("bad kappa {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            let mut csv = String::from("kappa,ef1_alpha,theorem2_bound,bound_satisfied,source\n");
            for k in kappa_list {
                let (ef1, source) = if k <= 8 {
                    let fam = generate(&FamilySpec::LargeBudgetTight { kappa: k })
                        .map_err(|e| CliError::new(EXIT_INPUT, e.to_string()))?;
                    let solved = solve_exact(&fam.instance, node_limit()?)?;
                    let report = audit_allocation(&fam.instance, &solved.allocation, false, 0)?;
                    let alpha = report
                        .ef1_alpha
                        .as_finite()
                        .cloned()
                        .ok_or_else(|| CliError::new(EXIT_INPUT, "family should constrain EF1"))?;
                    (alpha, "audited")
                } else {
                    // Closed form for the reference allocation.
                    (
                        ratio(k as i64, 2 * (k as i64 - 1)),
                        "closed_form",
                    )
                };
                let bound = theorem2_bound(k);
                let satisfied = if bound.is_positive() { ef1 >= bound } else { true };
                csv.push_str(&format!(
                    "{k},{},{},{satisfied},{source}\n",
                    format_num(&ef1),
                    format_num(&bound)
                ));
            }
            write_text(&out, &csv)?;
            print!("{csv}");
            Ok(EXIT_OK)
        }
        Command::Gen { family } => {
            let (spec, out, alloc_out) = match family {
                GenFamily::TightQuarter { eps, out, alloc_out } => {
                    let eps = parse_num(&eps)?;
                    (FamilySpec::TightQuarter { eps }, out, alloc_out)
                }
                GenFamily::LargeBudgetTight { kappa, out, alloc_out } => {
                    (FamilySpec::LargeBudgetTight { kappa }, out, alloc_out)
                }
                GenFamily::ApproxGap { kappa, out, alloc_out } => {
                    (FamilySpec::ApproxGap { kappa }, out, alloc_out)
                }
                GenFamily::Random { n, m, kappa, seed, out } => {
                    let inst = generate_random(n, m, kappa, seed)
                        .map_err(|e| CliError::new(EXIT_INPUT, e.to_string()))?;
                    write_text(&out, &inst.to_json_string())?;
                    println!("wrote {}", out.display());
                    return Ok(EXIT_OK);
                }
            };
            let fam = generate(&spec).map_err(|e| CliError::new(EXIT_INPUT, e.to_string()))?;
            write_text(&out, &fam.instance.to_json_string())?;
            println!("wrote {}", out.display());
            if let Some(reference) = fam.reference {
                let alloc_path = alloc_out.unwrap_or_else(|| derived_alloc_path(&out));
                write_text(&alloc_path, &reference.to_json_string())?;
                println!("wrote {}", alloc_path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Improve { instance, allocation, variant, out } => {
            let inst = read_instance(&instance)?;
            let alloc = read_allocation(&allocation)?;
            let before = nsw(&inst, &alloc)?;
            let found = find_witness(&inst, &alloc, variant)?;
            let Some((envier, envied, set)) = found else {
                println!("no witness");
                return Ok(EXIT_NO_WITNESS);
            };
            let improved = match variant {
                ImproveVariant::Quarter => {
                    construct_improvement_quarter(&inst, &alloc, envier, envied, &set)?
                }
                ImproveVariant::Warmup => {
                    construct_improvement_warmup(&inst, &alloc, envier, envied, &set)?
                }
                ImproveVariant::LargeBudget => {
                    let k = large_budget_k(&inst)?;
                    construct_improvement_large_budget(&inst, &alloc, envier, envied, &set, &k)?
                }
            };
            let after = nsw(&inst, &improved)?;
            if after <= before {
                return Err(CliError::new(
                    EXIT_DEGENERATE,
                    "construction did not improve the allocation",
                ));
            }
            let payload = json!({
                "allocation": improved.to_json_value(),
                "nsw_before": {"positive_count": before.positive_count, "product": format_num(&before.product)},
                "nsw_after": {"positive_count": after.positive_count, "product": format_num(&after.product)},
                "witness": {"envier": envier, "envied": envied, "set": set.iter().copied().collect::<Vec<_>>()},
            });
            write_text(&out, &serde_json::to_string(&payload).unwrap())?;
            println!("improved: {before} -> {after}");
            Ok(EXIT_OK)
        }
    }
}

fn derived_alloc_path(out: &Path) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some("json") => out.with_extension("alloc.json"),
        _ => {
            let mut name = out.as_os_str().to_owned();
            name.push(".alloc.json");
            PathBuf::from(name)
        }
    }
}

/// Rational lower bound on the fourth root of the instance's budget-cost
/// ratio, at denominator 10^6.
fn large_budget_k(inst: &Instance) -> Result<Num, CliError> {
    let k = kappa(inst)?;
    Ok(fourth_root_lower_bound(&k, 1_000_000))
}

fn theorem2_bound(k: u64) -> Num {
    let root = fourth_root_lower_bound(&k.into(), 1_000_000);
    ratio(1, 2) - ratio(5, 1) / root
}

/// Scans agent pairs in lexicographic order for the first witness violating
/// the variant's factor. The candidate set for a pair is the canonical
/// maximum-deficit EF1 witness.
fn find_witness(
    inst: &Instance,
    alloc: &Allocation,
    variant: ImproveVariant,
) -> Result<Option<(usize, usize, budget_fair::ItemSet)>, CliError> {
    use budget_fair::audit::max_envy_ef1;
    use budget_fair::bundle_value;

    let factor = match variant {
        ImproveVariant::Quarter => Some(ratio(4, 1)),
        ImproveVariant::Warmup => Some(ratio(11, 3)),
        ImproveVariant::LargeBudget => None,
    };
    for envier in 0..inst.n() {
        let own = bundle_value(inst, envier, &alloc.bundles[envier])?;
        for envied in 0..inst.n() {
            if envier == envied {
                continue;
            }
            let (deficit, witness) = max_envy_ef1(inst, alloc, envier, envied)?;
            let Some(witness) = witness else { continue };
            match &factor {
                Some(f) => {
                    if deficit > f * &own {
                        return Ok(Some((envier, envied, witness.set)));
                    }
                }
                None => {
                    // Large-budget condition: drop the owner's most valued
                    // item of the set and compare against 2 + 20/(k - 10).
                    let k = large_budget_k(inst)?;
                    let ten = ratio(10, 1);
                    if k <= ten {
                        continue;
                    }
                    let f = ratio(2, 1) + ratio(20, 1) / (&k - &ten);
                    let pivot = *witness
                        .set
                        .iter()
                        .max_by(|&&a, &&b| {
                            inst.value(envied, a)
                                .cmp(inst.value(envied, b))
                                .then(b.cmp(&a))
                        })
                        .unwrap();
                    let trimmed: Num = witness
                        .set
                        .iter()
                        .filter(|&&j| j != pivot)
                        .map(|&j| inst.value(envier, j).clone())
                        .sum();
                    if trimmed > &f * &own {
                        return Ok(Some((envier, envied, witness.set)));
                    }
                }
            }
        }
    }
    Ok(None)
}

//! Covering LPs over client subsets: `minimize sum r_i` subject to
//! `sum_{i in S} r_i >= rhs(S)` for each listed subset `S`, and `r >= 0`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::clients::{binomial, subsets_of_size, ClientSet};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::quantities::{
    group_demand_table, k_pair_unchecked, lambda_unchecked, DerivedParams,
};
use crate::Rational;

/// Default ceiling on the number of clients for exhaustive LP construction.
pub const DEFAULT_MAX_CLIENTS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub subset: ClientSet,
    pub rhs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearProgram {
    n_vars: usize,
    constraints: Vec<Constraint>,
    index: HashMap<ClientSet, usize>,
}

impl LinearProgram {
    pub fn new(n_vars: usize, constraints: Vec<Constraint>) -> Result<Self> {
        if n_vars == 0 || n_vars > crate::clients::MAX_CLIENTS {
            return Err(Error::input(format!("LP with {n_vars} variables")));
        }
        let all = ClientSet::all(n_vars);
        let mut index = HashMap::with_capacity(constraints.len());
        for (pos, c) in constraints.iter().enumerate() {
            if c.subset.is_empty() || c.subset == all || !c.subset.is_subset(all) {
                return Err(Error::input(format!(
                    "constraint subset {:?} is not a nonempty proper subset of 1..={n_vars}",
                    c.subset
                )));
            }
            if index.insert(c.subset, pos).is_some() {
                return Err(Error::input(format!("duplicate constraint on {:?}", c.subset)));
            }
        }
        Ok(LinearProgram {
            n_vars,
            constraints,
            index,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn rhs_of(&self, subset: ClientSet) -> Option<u64> {
        self.index.get(&subset).map(|&i| self.constraints[i].rhs)
    }

    pub fn position_of(&self, subset: ClientSet) -> Option<usize> {
        self.index.get(&subset).copied()
    }

    /// Constraint list as `[{"subset":[clients],"rhs":int}, ...]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.constraints).expect("constraints serialize")
    }

    pub fn from_json(n_vars: usize, text: &str) -> Result<Self> {
        let constraints: Vec<Constraint> = serde_json::from_str(text)?;
        Self::new(n_vars, constraints)
    }
}

fn check_capacity(inst: &Instance, max_clients: usize) -> Result<()> {
    if inst.n_clients() > max_clients {
        return Err(Error::Capacity(format!(
            "{} clients exceeds the LP limit of {max_clients}",
            inst.n_clients()
        )));
    }
    Ok(())
}

/// The robust-recovery LP: one constraint per subset of size `1..=P`, with right-hand side
/// the worst demand over every placement of the `M` unreliable clients outside the subset.
pub fn build_full(inst: &Instance) -> Result<LinearProgram> {
    build_full_capped(inst, DEFAULT_MAX_CLIENTS)
}

pub fn build_full_capped(inst: &Instance, max_clients: usize) -> Result<LinearProgram> {
    check_capacity(inst, max_clients)?;
    let n = inst.n_clients();
    let m = inst.n_unreliable();
    if n < 2 {
        return Err(Error::Degenerate {
            n_clients: n,
            n_unreliable: m,
        });
    }
    let p = n - m - 1;
    let all = inst.all_clients();
    let mut constraints = Vec::new();
    for size in 1..=p {
        for subset in subsets_of_size(all, size) {
            let outside = subset.complement(n);
            let rhs = subsets_of_size(outside, m)
                .map(|unreliable| inst.demand_count_unchecked(outside.difference(unreliable), unreliable))
                .max()
                .unwrap_or(0);
            constraints.push(Constraint {
                subset,
                rhs: rhs as u64,
            });
        }
    }
    debug_assert_eq!(
        constraints.len() as u64,
        (1..=p).map(|v| binomial(n, v)).sum::<u64>()
    );
    LinearProgram::new(n, constraints)
}

/// Only the size-`P` constraints of [`build_full`].
pub fn build_reduced(inst: &Instance) -> Result<LinearProgram> {
    check_capacity(inst, DEFAULT_MAX_CLIENTS)?;
    let params = DerivedParams::of(inst)?;
    let table = group_demand_table(inst);
    let constraints = subsets_of_size(inst.all_clients(), params.p)
        .map(|subset| Constraint {
            subset,
            rhs: table[&subset.complement(params.n_clients)] as u64,
        })
        .collect();
    LinearProgram::new(params.n_clients, constraints)
}

/// Same subsets as [`build_reduced`], with right-hand side `k_j` where `j` is the smallest
/// client outside the subset. Expects an instance re-labeled by `relabel_general`.
pub fn build_overconstrained_general(
    inst: &Instance,
    params: &DerivedParams,
    k: &[usize],
) -> Result<LinearProgram> {
    check_capacity(inst, DEFAULT_MAX_CLIENTS)?;
    let n = params.n_clients;
    let m = params.n_unreliable;
    if n != inst.n_clients() || m != inst.n_unreliable() || k.len() != n - m {
        return Err(Error::input("k vector or parameters do not match the instance"));
    }
    let all = inst.all_clients();
    let mut constraints = Vec::new();
    for j in 1..=n - m {
        let prefix: ClientSet = (1..j).collect();
        let free = all.difference(prefix).without(j);
        for tail in subsets_of_size(free, params.p + 1 - j) {
            constraints.push(Constraint {
                subset: prefix.union(tail),
                rhs: k[j - 1] as u64,
            });
        }
    }
    if constraints.len() as u64 != binomial(n, params.p) {
        return Err(Error::invariant(format!(
            "over-constrained families cover {} subsets, expected C({n},{})",
            constraints.len(),
            params.p
        )));
    }
    LinearProgram::new(n, constraints)
}

/// The `M = 1` reduced LP, one constraint per pair `m < n` on `[N] \ {m, n}` with rhs `k_{m,n}`.
pub fn build_m1_full(inst: &Instance) -> Result<LinearProgram> {
    pair_lp(inst, |m, n| k_pair_unchecked(inst, m, n) as i64)
}

/// The `M = 1` over-constrained LP with rhs `lambda_{m,n}`. Expects an instance re-labeled
/// by `relabel_m1`.
pub fn build_m1_overconstrained(inst: &Instance, params: &DerivedParams) -> Result<LinearProgram> {
    if params.n_clients != inst.n_clients() || params.n_unreliable != inst.n_unreliable() {
        return Err(Error::input("parameters do not match the instance"));
    }
    pair_lp(inst, |m, n| lambda_unchecked(inst, params, m, n))
}

fn pair_lp(inst: &Instance, rhs: impl Fn(usize, usize) -> i64) -> Result<LinearProgram> {
    check_capacity(inst, DEFAULT_MAX_CLIENTS)?;
    if inst.n_unreliable() != 1 {
        return Err(Error::input(format!(
            "pair LPs require M = 1, got M = {}",
            inst.n_unreliable()
        )));
    }
    let n = inst.n_clients();
    if n < 3 {
        return Err(Error::Degenerate {
            n_clients: n,
            n_unreliable: 1,
        });
    }
    let all = inst.all_clients();
    let mut constraints = Vec::new();
    for m in 1..=n {
        for big in m + 1..=n {
            let value = rhs(m, big);
            if value < 0 {
                return Err(Error::invariant(format!("negative rhs {value} for pair ({m},{big})")));
            }
            constraints.push(Constraint {
                subset: all.without(m).without(big),
                rhs: value as u64,
            });
        }
    }
    LinearProgram::new(n, constraints)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub constraint: usize,
    pub subset: ClientSet,
    /// `lhs - rhs`, negative.
    pub slack: Rational,
}

/// Every constraint the schedule fails, with its (negative) slack.
pub fn check_feasible(lp: &LinearProgram, values: &[Rational]) -> Result<Vec<Violation>> {
    if values.len() != lp.n_vars() {
        return Err(Error::input(format!(
            "schedule has {} entries for an LP over {} clients",
            values.len(),
            lp.n_vars()
        )));
    }
    Ok(lp
        .constraints()
        .iter()
        .enumerate()
        .filter_map(|(pos, c)| {
            let lhs: Rational = c.subset.iter().map(|i| &values[i - 1]).sum();
            let slack = lhs - Rational::from_integer(BigInt::from(c.rhs));
            slack.is_negative().then_some(Violation {
                constraint: pos,
                subset: c.subset,
                slack,
            })
        })
        .collect())
}

/// Indices of constraints met with equality.
pub fn tight_constraints(lp: &LinearProgram, values: &[Rational]) -> Vec<usize> {
    lp.constraints()
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let lhs: Rational = c.subset.iter().map(|i| &values[i - 1]).sum();
            (lhs - Rational::from_integer(BigInt::from(c.rhs))).is_zero()
        })
        .map(|(pos, _)| pos)
        .collect()
}

//! Exact rational simplex for the covering LPs in [`crate::lp`].
//!
//! The solver works on the dual, `maximize sum_S rhs(S) s_S` subject to
//! `sum_{S ∋ i} s_S <= 1` (or `= 1` when the primal variables are free) and `s >= 0`,
//! which has an obvious starting basis in the nonnegative case. The primal schedule is read
//! off the reduced costs of the identity columns, so every solve yields a primal/dual pair
//! whose objectives agree exactly.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::lp::{tight_constraints, LinearProgram};
use crate::Rational;

const MAX_PIVOTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PivotRule {
    /// Smallest-index entering and leaving variables; never cycles.
    #[default]
    Bland,
    /// Most negative reduced cost, falling back to Bland after a run of degenerate pivots.
    LargestCoefficient,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VariableDomain {
    #[default]
    NonNegative,
    /// Drops `r >= 0`; used to study closed forms that leave the nonnegative orthant.
    Free,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    pub pivot: PivotRule,
    pub domain: VariableDomain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpSolution {
    pub value: Rational,
    /// Optimal transmission counts, indexed by client - 1.
    pub r: Vec<Rational>,
    /// Constraints met with equality by `r`.
    pub tight: Vec<usize>,
    /// Optimal dual multipliers, one per constraint.
    pub duals: Vec<Rational>,
    pub domain: VariableDomain,
    pub pivots: usize,
}

impl LpSolution {
    /// Re-checks primal feasibility, dual feasibility and equal objectives from scratch.
    pub fn verify(&self, lp: &LinearProgram) -> Result<()> {
        let n = lp.n_vars();
        if self.r.len() != n || self.duals.len() != lp.len() {
            return Err(Error::invariant("solution dimensions do not match the LP"));
        }
        if self.domain == VariableDomain::NonNegative && self.r.iter().any(|v| v.is_negative()) {
            return Err(Error::invariant("primal solution has a negative component"));
        }
        let violations = crate::lp::check_feasible(lp, &self.r)?;
        if !violations.is_empty() {
            return Err(Error::invariant(format!(
                "primal solution violates {} constraints",
                violations.len()
            )));
        }
        if self.duals.iter().any(|s| s.is_negative()) {
            return Err(Error::invariant("negative dual multiplier"));
        }
        let mut load = vec![Rational::zero(); n];
        for (c, s) in lp.constraints().iter().zip(&self.duals) {
            for i in c.subset.iter() {
                load[i - 1] += s;
            }
        }
        let one = Rational::one();
        let dual_ok = match self.domain {
            VariableDomain::NonNegative => load.iter().all(|l| *l <= one),
            VariableDomain::Free => load.iter().all(|l| *l == one),
        };
        if !dual_ok {
            return Err(Error::invariant("dual multipliers are not dual feasible"));
        }
        let primal: Rational = self.r.iter().sum();
        let dual: Rational = lp
            .constraints()
            .iter()
            .zip(&self.duals)
            .map(|(c, s)| s * Rational::from_integer(BigInt::from(c.rhs)))
            .sum();
        if primal != dual || primal != self.value {
            return Err(Error::invariant(format!(
                "objectives disagree: primal {primal}, dual {dual}, reported {}",
                self.value
            )));
        }
        Ok(())
    }
}

pub fn solve_exact(lp: &LinearProgram) -> Result<LpSolution> {
    solve_exact_with(lp, SolveOptions::default())
}

pub fn solve_exact_with(lp: &LinearProgram, options: SolveOptions) -> Result<LpSolution> {
    if lp.is_empty() {
        return Err(Error::input("cannot solve an LP without constraints"));
    }
    let mut tableau = Tableau::new(lp, options);
    if options.domain == VariableDomain::Free {
        tableau.phase_one()?;
    }
    tableau.phase_two()?;
    tableau.into_solution(lp)
}

/// Dense tableau for `max c.x, E x = 1, x >= 0` with one row per client.
struct Tableau {
    rows: Vec<Vec<Rational>>,
    /// Reduced costs; last entry is the objective value.
    objective: Vec<Rational>,
    basis: Vec<usize>,
    costs: Vec<Rational>,
    n_structural: usize,
    /// Column of the identity (slack or artificial) attached to each row.
    identity_cols: Vec<usize>,
    /// Columns allowed to enter the basis.
    enterable: usize,
    rule: PivotRule,
    domain: VariableDomain,
    pivots: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram, options: SolveOptions) -> Self {
        let n = lp.n_vars();
        let m = lp.len();
        let width = m + n + 1;
        let mut rows = vec![vec![Rational::zero(); width]; n];
        for (j, c) in lp.constraints().iter().enumerate() {
            for i in c.subset.iter() {
                rows[i - 1][j] = Rational::one();
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row[m + i] = Rational::one();
            row[width - 1] = Rational::one();
        }
        let mut costs: Vec<Rational> = lp
            .constraints()
            .iter()
            .map(|c| Rational::from_integer(BigInt::from(c.rhs)))
            .collect();
        costs.extend(std::iter::repeat_n(Rational::zero(), n));

        // Identity columns are slacks (enterable) when r >= 0, artificials otherwise.
        let enterable = match options.domain {
            VariableDomain::NonNegative => m + n,
            VariableDomain::Free => m,
        };
        let mut tableau = Tableau {
            rows,
            objective: vec![Rational::zero(); width],
            basis: (m..m + n).collect(),
            costs,
            n_structural: m,
            identity_cols: (m..m + n).collect(),
            enterable,
            rule: options.pivot,
            domain: options.domain,
            pivots: 0,
        };
        tableau.reprice();
        tableau
    }

    fn width(&self) -> usize {
        self.objective.len()
    }

    /// Recomputes reduced costs `c_B B^-1 a_j - c_j` from the current basis.
    fn reprice(&mut self) {
        let costs = self.costs.clone();
        self.reprice_with(&costs);
    }

    fn reprice_with(&mut self, costs: &[Rational]) {
        let width = self.width();
        let mut objective: Vec<Rational> = (0..width)
            .map(|j| if j + 1 < width { -costs[j].clone() } else { Rational::zero() })
            .collect();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = &costs[b];
            if cb.is_zero() {
                continue;
            }
            for (o, v) in objective.iter_mut().zip(row) {
                if !v.is_zero() {
                    *o += cb * v;
                }
            }
        }
        self.objective = objective;
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width();
        let inv = self.rows[row][col].recip();
        for v in self.rows[row].iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let pivot_row = self.rows[row].clone();
        for (r, other) in self.rows.iter_mut().enumerate() {
            if r == row || other[col].is_zero() {
                continue;
            }
            let factor = other[col].clone();
            for j in 0..width {
                if !pivot_row[j].is_zero() {
                    other[j] -= &factor * &pivot_row[j];
                }
            }
        }
        let factor = self.objective[col].clone();
        if !factor.is_zero() {
            for (cost, coeff) in self.objective.iter_mut().zip(&pivot_row) {
                if !coeff.is_zero() {
                    *cost -= &factor * coeff;
                }
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    fn entering(&self, use_bland: bool) -> Option<usize> {
        let candidates = (0..self.enterable).filter(|&j| self.objective[j].is_negative());
        if use_bland || self.rule == PivotRule::Bland {
            return candidates.min();
        }
        candidates.min_by(|&a, &b| self.objective[a].cmp(&self.objective[b]).then(a.cmp(&b)))
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let rhs = self.width() - 1;
        let mut best: Option<(Rational, usize, usize)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if !row[col].is_positive() {
                continue;
            }
            let ratio = &row[rhs] / &row[col];
            let better = match &best {
                None => true,
                Some((r, _, b)) => ratio < *r || (ratio == *r && self.basis[i] < *b),
            };
            if better {
                best = Some((ratio, i, self.basis[i]));
            }
        }
        best.map(|(_, i, _)| i)
    }

    fn optimize(&mut self) -> Result<()> {
        let rhs = self.width() - 1;
        let mut degenerate_run = 0usize;
        let degenerate_limit = 2 * self.width();
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(Error::Capacity(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
            let Some(col) = self.entering(degenerate_run > degenerate_limit) else {
                return Ok(());
            };
            let Some(row) = self.leaving(col) else {
                // dual unbounded means the covering LP has no feasible point
                return Err(Error::Infeasible);
            };
            if self.rows[row][rhs].is_zero() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
    }

    /// Finds a basis without artificials (free-variable mode only).
    fn phase_one(&mut self) -> Result<()> {
        let width = self.width();
        let mut phase_costs = vec![Rational::zero(); width - 1];
        for &a in &self.identity_cols {
            phase_costs[a] = -Rational::one();
        }
        self.reprice_with(&phase_costs);
        self.optimize()?;
        if self.objective[width - 1].is_negative() {
            // no s >= 0 with equality loads: primal with free variables is unbounded below
            return Err(Error::Unbounded);
        }
        // drive remaining zero-level artificials out where possible
        for row in 0..self.rows.len() {
            if self.basis[row] < self.n_structural {
                continue;
            }
            if let Some(col) = (0..self.n_structural).find(|&j| !self.rows[row][j].is_zero()) {
                self.pivot(row, col);
            }
        }
        Ok(())
    }

    fn phase_two(&mut self) -> Result<()> {
        self.reprice();
        self.optimize()
    }

    fn into_solution(self, lp: &LinearProgram) -> Result<LpSolution> {
        let rhs = self.width() - 1;
        let r: Vec<Rational> = self
            .identity_cols
            .iter()
            .map(|&col| self.objective[col].clone())
            .collect();
        let mut duals = vec![Rational::zero(); self.n_structural];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_structural {
                duals[b] = row[rhs].clone();
            }
        }
        let value = self.objective[rhs].clone();
        let solution = LpSolution {
            tight: tight_constraints(lp, &r),
            value,
            r,
            duals,
            domain: self.domain,
            pivots: self.pivots,
        };
        solution.verify(lp)?;
        Ok(solution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::ClientSet;
    use crate::instance::fixtures::*;
    use crate::instance::Instance;
    use crate::lp::{build_full, build_m1_full, Constraint};

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn singleton_constraints() {
        let n = 4;
        let lp = LinearProgram::new(
            n,
            (1..=n)
                .map(|i| Constraint {
                    subset: ClientSet::singleton(i),
                    rhs: 1,
                })
                .collect(),
        )
        .unwrap();
        let sol = solve_exact(&lp).unwrap();
        assert_eq!(sol.value, rat(4, 1));
        assert_eq!(sol.r, vec![rat(1, 1); 4]);
        assert_eq!(sol.tight.len(), 4);
    }

    #[test]
    fn instance_a_full_lp() {
        let sol = solve_exact(&build_full(&instance_a()).unwrap()).unwrap();
        assert_eq!(sol.value, rat(3, 1));
        assert_eq!(sol.r, vec![rat(1, 1); 3]);
    }

    #[test]
    fn instance_b_full_lp() {
        let sol = solve_exact(&build_full(&instance_b()).unwrap()).unwrap();
        assert_eq!(sol.value, rat(3, 1));
        assert_eq!(sol.r, vec![rat(1, 1); 3]);
    }

    #[test]
    fn fractional_optimum() {
        // r1 + r2 >= 1, r2 + r3 >= 1, r1 + r3 >= 1: optimum 3/2 at (1/2, 1/2, 1/2)
        let pair = |a, b| Constraint {
            subset: [a, b].into_iter().collect(),
            rhs: 1,
        };
        let lp = LinearProgram::new(4, vec![pair(1, 2), pair(2, 3), pair(1, 3)]).unwrap();
        let sol = solve_exact(&lp).unwrap();
        assert_eq!(sol.value, rat(3, 2));
        assert_eq!(&sol.r[..3], &[rat(1, 2), rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn pivot_rules_agree() {
        for seed in 0..10 {
            let inst = Instance::generate_random(5, 1, 30, 0.5, seed).unwrap();
            let lp = build_full(&inst).unwrap();
            let bland = solve_exact(&lp).unwrap();
            let dantzig = solve_exact_with(
                &lp,
                SolveOptions {
                    pivot: PivotRule::LargestCoefficient,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(bland.value, dantzig.value);
        }
    }

    #[test]
    fn free_domain_never_exceeds_nonnegative() {
        for seed in 0..10 {
            let inst = Instance::generate_random(6, 1, 20, 0.5, seed).unwrap();
            let lp = build_m1_full(&inst).unwrap();
            let nonneg = solve_exact(&lp).unwrap();
            let free = solve_exact_with(
                &lp,
                SolveOptions {
                    domain: VariableDomain::Free,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(free.value <= nonneg.value);
        }
    }

    #[test]
    fn free_domain_unbounded_when_a_client_is_uncovered() {
        // client 2 appears in no constraint, so r_2 can go to minus infinity
        let lp = LinearProgram::new(
            2,
            vec![Constraint {
                subset: ClientSet::singleton(1),
                rhs: 1,
            }],
        )
        .unwrap();
        let err = solve_exact_with(
            &lp,
            SolveOptions {
                domain: VariableDomain::Free,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unbounded));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let sol = solve_exact(&build_full(&all_full(4, 1, 5)).unwrap()).unwrap();
        assert!(sol.value.is_zero());
    }
}

//! Explicit dual solutions certifying that the closed forms are optimal.
//!
//! A witness is a family of size-`P` client subsets split into parts `S^(1) .. S^(Q+1)`;
//! every member gets dual weight `1/P` and every other constraint weight zero.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::clients::ClientSet;
use crate::error::{Error, Result};
use crate::lp::LinearProgram;
use crate::quantities::DerivedParams;
use crate::{format_rational, integer, ratio, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    General,
    M1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualWitness {
    pub kind: WitnessKind,
    pub params: DerivedParams,
    /// `families[j - 1]` is `S^(j)`.
    pub families: Vec<Vec<ClientSet>>,
}

impl DualWitness {
    pub fn weight(&self) -> Rational {
        ratio(1, self.params.p)
    }

    pub fn members(&self) -> impl Iterator<Item = ClientSet> + '_ {
        self.families.iter().flatten().copied()
    }

    /// Number of members containing each client (index `c - 1`).
    pub fn membership(&self) -> Vec<usize> {
        let mut counts = vec![0; self.params.n_clients];
        for member in self.members() {
            for c in member.iter() {
                counts[c - 1] += 1;
            }
        }
        counts
    }

    /// Checks part sizes, member sizes, the per-part structure of the general witness and
    /// that every client sits in exactly `P` members.
    pub fn validate(&self) -> Result<()> {
        let DerivedParams {
            n_clients: n,
            n_unreliable: m,
            p,
            q,
            r,
        } = self.params;
        if self.families.len() != q + 1 {
            return Err(Error::invariant(format!(
                "witness has {} parts, expected {}",
                self.families.len(),
                q + 1
            )));
        }
        for (idx, family) in self.families.iter().enumerate() {
            let j = idx + 1;
            let expected = if j <= q { m + 1 } else { m + 1 - r };
            if family.len() != expected {
                return Err(Error::invariant(format!(
                    "part {j} has {} members, expected {expected}",
                    family.len()
                )));
            }
            for member in family {
                if member.len() != p || !member.is_subset(ClientSet::all(n)) {
                    return Err(Error::invariant(format!("part {j} member {member:?} is not a {p}-subset")));
                }
                if self.kind == WitnessKind::General {
                    let prefix: ClientSet = (1..j).collect();
                    if member.contains(j) || !prefix.is_subset(*member) {
                        return Err(Error::invariant(format!(
                            "part {j} member {member:?} must avoid {j} and contain 1..{}",
                            j - 1
                        )));
                    }
                }
            }
        }
        let membership = self.membership();
        if let Some(pos) = membership.iter().position(|&c| c != p) {
            return Err(Error::invariant(format!(
                "client {} is in {} members, expected {p}",
                pos + 1,
                membership[pos]
            )));
        }
        Ok(())
    }

    pub fn to_json(&self, objective: Option<&Rational>) -> String {
        #[derive(Serialize)]
        struct Part {
            index: usize,
            members: Vec<ClientSet>,
        }
        #[derive(Serialize)]
        struct WitnessFile<'a> {
            version: u32,
            kind: WitnessKind,
            n_clients: usize,
            n_unreliable: usize,
            p: usize,
            q: usize,
            r: usize,
            weight: String,
            parts: Vec<Part>,
            membership: Vec<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            objective: Option<&'a str>,
        }
        let objective = objective.map(format_rational);
        let file = WitnessFile {
            version: 1,
            kind: self.kind,
            n_clients: self.params.n_clients,
            n_unreliable: self.params.n_unreliable,
            p: self.params.p,
            q: self.params.q,
            r: self.params.r,
            weight: format_rational(&self.weight()),
            parts: self
                .families
                .iter()
                .enumerate()
                .map(|(i, f)| Part {
                    index: i + 1,
                    members: f.clone(),
                })
                .collect(),
            membership: self.membership(),
            objective: objective.as_deref(),
        };
        serde_json::to_string_pretty(&file).expect("witness serializes")
    }
}

/// Greedy witness for general `M`.
///
/// Part `j <= Q` takes `M + 1` members made of `{1..Q} \ {j}` plus `P - Q + 1` clients from
/// `{Q+1..N}`; part `Q + 1` takes `M - R + 1` members made of `{1..Q}` plus `P - Q` clients
/// from `{Q+2..N}`. Free slots go to the clients used least so far, except that client
/// `Q + 1` (which part `Q + 1` cannot use) is served first until it reaches `P`.
pub fn construct_witness_general(params: &DerivedParams) -> Result<DualWitness> {
    let DerivedParams {
        n_clients: n,
        n_unreliable: m,
        p,
        q,
        r,
    } = *params;
    let head: ClientSet = (1..=q).collect();
    let mut counts = vec![0usize; n + 1];
    let mut families = Vec::with_capacity(q + 1);

    for j in 1..=q + 1 {
        let (base, pool, slots, rounds) = if j <= q {
            (head.without(j), q + 1..=n, p + 1 - q, m + 1)
        } else {
            (head, q + 2..=n, p - q, m + 1 - r)
        };
        let mut family = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut candidates: Vec<usize> = pool.clone().filter(|&c| counts[c] < p).collect();
            candidates.sort_by_key(|&c| {
                let urgent = c == q + 1 && counts[c] < p;
                (!urgent, counts[c], c)
            });
            if candidates.len() < slots {
                return Err(Error::invariant(format!(
                    "part {j}: only {} clients left for {slots} free slots",
                    candidates.len()
                )));
            }
            let mut member = base;
            for &c in &candidates[..slots] {
                member.insert(c);
            }
            for c in member.iter() {
                counts[c] += 1;
            }
            family.push(member);
        }
        families.push(family);
    }

    // Free slots after `rounds` rounds, and the number of free clients at count >= `level`
    // if the fill were perfectly balanced.
    let free = n - q;
    let filled = |rounds: usize| -> i64 {
        let full = (m + 1) * q;
        let base = (rounds * (p + 1 - q)) as i64;
        if rounds <= full {
            base
        } else {
            base + full as i64 - rounds as i64
        }
    };
    let at_least = |rounds: usize, level: usize| filled(rounds) - (level as i64 - 1) * free as i64;
    let total_rounds = (m + 1) * (q + 1) - r;
    debug_assert_eq!(total_rounds, n);
    let expected = at_least(total_rounds, p);
    let observed = (q + 1..=n).filter(|&c| counts[c] >= p).count() as i64;
    if expected != free as i64 || observed != expected {
        return Err(Error::invariant(format!(
            "counter audit failed: formula {expected}, observed {observed}, expected {free}"
        )));
    }

    let witness = DualWitness {
        kind: WitnessKind::General,
        params: *params,
        families,
    };
    witness.validate()?;
    Ok(witness)
}

/// Explicit pair-indexed witness for `M = 1`; member `(m, n)` is `[N] \ {m, n}`.
pub fn construct_witness_m1(params: &DerivedParams) -> Result<DualWitness> {
    if params.n_unreliable != 1 {
        return Err(Error::input(format!(
            "the pair witness needs M = 1, got M = {}",
            params.n_unreliable
        )));
    }
    let pairs = m1_witness_pairs(params);
    let all = ClientSet::all(params.n_clients);
    let families = pairs
        .iter()
        .map(|part| part.iter().map(|&(a, b)| all.without(a).without(b)).collect())
        .collect();
    let witness = DualWitness {
        kind: WitnessKind::M1,
        params: *params,
        families,
    };
    witness.validate()?;
    Ok(witness)
}

/// The `(m, n)` pairs of the `M = 1` witness, grouped by part.
pub fn m1_witness_pairs(params: &DerivedParams) -> Vec<Vec<(usize, usize)>> {
    let (n, q, r) = (params.n_clients, params.q, params.r);
    let pair = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut parts: Vec<Vec<(usize, usize)>> = Vec::with_capacity(q + 1);
    // with R = 1 the last part is the single pair (Q, N - Q)
    let paired_parts = if r == 1 { q } else { q + 1 };
    if q % 2 == 1 {
        let half = q.div_ceil(2);
        for j in 1..=paired_parts {
            let (a, b) = if j <= half { (2 * j - 1, 2 * j) } else { (2 * j - q - 2, 2 * j - q - 1) };
            parts.push(vec![pair(a, n + 1 - j), pair(b, n + 1 - j)]);
        }
    } else {
        let half = q / 2;
        for j in 1..=paired_parts {
            if j <= half {
                parts.push(vec![pair(2 * j - 1, n + 1 - j), pair(2 * j, n + 1 - j)]);
            } else if j == half + 1 {
                parts.push(vec![pair(q + 1, n - half), pair(1, n - half)]);
            } else {
                parts.push(vec![pair(2 * j - q - 2, n + 1 - j), pair(2 * j - q - 1, n + 1 - j)]);
            }
        }
    }
    if r == 1 {
        parts.push(vec![pair(q, n - q)]);
    }
    parts
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessCheck {
    /// Every client's load is at most one.
    pub dual_feasible: bool,
    /// Every client's load is exactly one.
    pub tight: bool,
    pub loads: Vec<Rational>,
    pub objective: Rational,
}

/// Evaluates the witness as a dual solution of `lp`.
pub fn check_witness(lp: &LinearProgram, witness: &DualWitness) -> Result<WitnessCheck> {
    if lp.n_vars() != witness.params.n_clients {
        return Err(Error::input(format!(
            "witness over {} clients checked against an LP over {}",
            witness.params.n_clients,
            lp.n_vars()
        )));
    }
    let weight = witness.weight();
    let mut loads = vec![Rational::zero(); lp.n_vars()];
    let mut objective = Rational::zero();
    for member in witness.members() {
        let rhs = lp.rhs_of(member).ok_or_else(|| Error::WitnessMismatch {
            subset: member.to_vec(),
        })?;
        objective += &weight * integer(rhs);
        for c in member.iter() {
            loads[c - 1] += &weight;
        }
    }
    let one = Rational::one();
    Ok(WitnessCheck {
        dual_feasible: loads.iter().all(|l| *l <= one),
        tight: loads.iter().all(|l| *l == one),
        loads,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::*;
    use crate::lp::{build_m1_overconstrained, build_overconstrained_general, LinearProgram};
    use crate::quantities::k_family;

    fn cs(clients: &[usize]) -> ClientSet {
        clients.iter().copied().collect()
    }

    #[test]
    fn general_witness_n4_m1() {
        let w = construct_witness_general(&DerivedParams::new(4, 1).unwrap()).unwrap();
        assert_eq!(w.families[0], vec![cs(&[2, 3]), cs(&[2, 4])]);
        assert_eq!(w.families[1], vec![cs(&[1, 3]), cs(&[1, 4])]);
        assert_eq!(w.membership(), vec![2; 4]);
    }

    #[test]
    fn general_witness_n3_m1() {
        let w = construct_witness_general(&DerivedParams::new(3, 1).unwrap()).unwrap();
        assert_eq!(w.families, vec![vec![cs(&[2]), cs(&[3])], vec![cs(&[1])]]);
    }

    #[test]
    fn general_witness_all_small_cases() {
        for n in 2..=12 {
            for m in 0..=n - 2 {
                let params = DerivedParams::new(n, m).unwrap();
                construct_witness_general(&params).unwrap_or_else(|e| panic!("N={n} M={m}: {e}"));
            }
        }
    }

    #[test]
    fn m1_witness_cases() {
        let members = |n| {
            let mut pairs: Vec<_> = m1_witness_pairs(&DerivedParams::new(n, 1).unwrap()).concat();
            pairs.sort();
            pairs
        };
        assert_eq!(members(4), vec![(1, 3), (1, 4), (2, 3), (2, 4)]);
        assert_eq!(members(3), vec![(1, 2), (1, 3), (2, 3)]);
        let w = construct_witness_m1(&DerivedParams::new(6, 1).unwrap()).unwrap();
        assert_eq!(w.members().count(), 6);
        assert_eq!(w.membership(), vec![4; 6]);
        for n in 3..=20 {
            construct_witness_m1(&DerivedParams::new(n, 1).unwrap()).unwrap_or_else(|e| panic!("N={n}: {e}"));
        }
        assert!(construct_witness_m1(&DerivedParams::new(6, 2).unwrap()).is_err());
    }

    #[test]
    fn objectives_on_instance_c() {
        let c = instance_c();
        let params = DerivedParams::of(&c).unwrap();
        let k = k_family(&c, &params).unwrap();
        let lp = build_overconstrained_general(&c, &params, &k).unwrap();
        let check = check_witness(&lp, &construct_witness_general(&params).unwrap()).unwrap();
        assert!(check.dual_feasible && check.tight);
        assert_eq!(check.objective, integer(4));

        let lp = build_m1_overconstrained(&c, &params).unwrap();
        let check = check_witness(&lp, &construct_witness_m1(&params).unwrap()).unwrap();
        assert_eq!(check.objective, integer(4));
    }

    #[test]
    fn zero_rhs_and_mismatch() {
        let full = all_full(5, 1, 4);
        let params = DerivedParams::of(&full).unwrap();
        let lp = build_m1_overconstrained(&full, &params).unwrap();
        let check = check_witness(&lp, &construct_witness_m1(&params).unwrap()).unwrap();
        assert!(check.objective.is_zero());

        let tiny = LinearProgram::new(
            5,
            vec![crate::lp::Constraint {
                subset: cs(&[1]),
                rhs: 1,
            }],
        )
        .unwrap();
        let err = check_witness(&tiny, &construct_witness_m1(&params).unwrap()).unwrap_err();
        assert!(matches!(err, Error::WitnessMismatch { .. }));
    }

    #[test]
    fn json_has_objective_fraction() {
        let w = construct_witness_general(&DerivedParams::new(4, 1).unwrap()).unwrap();
        let text = w.to_json(Some(&ratio(9, 2)));
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["objective"], "9/2");
        assert_eq!(value["membership"], serde_json::json!([2, 2, 2, 2]));
    }
}

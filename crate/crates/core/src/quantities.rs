//! Instance statistics the closed forms are built from: `k_j`, `k_{i,j}`, `lambda_{m,n}`,
//! the `(P, Q, R)` parameters, and the two client re-labelings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::clients::{subsets_of_size, ClientSet};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// `P = N - M - 1` chunks per packet, and the unique `Q >= 1`, `0 <= R <= M` with
/// `N = (M + 1)(Q + 1) - R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub n_clients: usize,
    pub n_unreliable: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl DerivedParams {
    pub fn new(n_clients: usize, n_unreliable: usize) -> Result<Self> {
        if n_clients < n_unreliable + 2 {
            return Err(Error::Degenerate {
                n_clients,
                n_unreliable,
            });
        }
        let group = n_unreliable + 1;
        let q_plus_one = n_clients.div_ceil(group);
        let params = DerivedParams {
            n_clients,
            n_unreliable,
            p: n_clients - n_unreliable - 1,
            q: q_plus_one - 1,
            r: group * q_plus_one - n_clients,
        };
        debug_assert!(params.q >= 1 && params.r <= n_unreliable);
        Ok(params)
    }

    pub fn of(inst: &Instance) -> Result<Self> {
        Self::new(inst.n_clients(), inst.n_unreliable())
    }
}

/// Convenience wrapper matching the operation name used throughout the docs.
pub fn derive_params(n_clients: usize, n_unreliable: usize) -> Result<DerivedParams> {
    DerivedParams::new(n_clients, n_unreliable)
}

/// Permutation of clients: new label `l` (1-based) is original client `new_to_old[l - 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relabeling {
    new_to_old: Vec<usize>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Relabeling {
            new_to_old: (1..=n).collect(),
        }
    }

    pub fn from_new_to_old(new_to_old: Vec<usize>) -> Result<Self> {
        let n = new_to_old.len();
        let mut seen = vec![false; n];
        for &old in &new_to_old {
            if old == 0 || old > n || std::mem::replace(&mut seen[old - 1], true) {
                return Err(Error::input(format!("{new_to_old:?} is not a permutation of 1..={n}")));
            }
        }
        Ok(Relabeling { new_to_old })
    }

    pub fn len(&self) -> usize {
        self.new_to_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_to_old.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.new_to_old.iter().enumerate().all(|(i, &old)| old == i + 1)
    }

    pub fn new_to_old(&self) -> &[usize] {
        &self.new_to_old
    }

    pub fn old_of(&self, new: usize) -> usize {
        self.new_to_old[new - 1]
    }

    pub fn new_of(&self, old: usize) -> usize {
        1 + self
            .new_to_old
            .iter()
            .position(|&o| o == old)
            .expect("client present in permutation")
    }

    pub fn apply(&self, inst: &Instance) -> Result<Instance> {
        inst.permuted(&self.new_to_old)
    }

    /// Values indexed by new label, re-indexed by original client.
    pub fn to_original<T: Clone>(&self, by_new: &[T]) -> Vec<T> {
        let mut out = by_new.to_vec();
        for (new_idx, &old) in self.new_to_old.iter().enumerate() {
            out[old - 1] = by_new[new_idx].clone();
        }
        out
    }
}

/// `k_{i,j} = |required_set(i, {j})|`.
pub fn k_pair(inst: &Instance, i: usize, j: usize) -> Result<usize> {
    inst.check_client(i)?;
    inst.check_client(j)?;
    if i == j {
        return Err(Error::input(format!("k_pair needs distinct clients, got {i} twice")));
    }
    Ok(k_pair_unchecked(inst, i, j))
}

pub(crate) fn k_pair_unchecked(inst: &Instance, i: usize, j: usize) -> usize {
    inst.demand_count_unchecked(ClientSet::singleton(i), ClientSet::singleton(j))
}

/// Worst single-client demand when `group` (of size `M + 1`) sits outside a size-`P` subset:
/// `max_{i in group} |required_set(i, group \ {i})|`.
pub(crate) fn group_demand(inst: &Instance, group: ClientSet) -> usize {
    group
        .iter()
        .map(|i| inst.demand_count_unchecked(ClientSet::singleton(i), group.without(i)))
        .max()
        .unwrap_or(0)
}

/// `group_demand` for every `(M + 1)`-subset of clients, keyed by the subset.
pub(crate) fn group_demand_table(inst: &Instance) -> HashMap<ClientSet, usize> {
    subsets_of_size(inst.all_clients(), inst.n_unreliable() + 1)
        .map(|g| (g, group_demand(inst, g)))
        .collect()
}

/// `k_1 .. k_{N-M}` on an already re-labeled instance.
///
/// `k_j` maximises the group demand over all groups of size `M + 1` that contain `j` and
/// avoid `1..j-1`; equivalently over size-`P` subsets containing `1..j-1` and not `j`.
pub fn k_family(inst: &Instance, params: &DerivedParams) -> Result<Vec<usize>> {
    check_params(inst, params)?;
    let table = group_demand_table(inst);
    k_family_from_table(inst, &table)
}

fn k_family_from_table(inst: &Instance, table: &HashMap<ClientSet, usize>) -> Result<Vec<usize>> {
    let n = inst.n_clients();
    let m = inst.n_unreliable();
    (1..=n - m)
        .map(|j| {
            let later: ClientSet = (j + 1..=n).collect();
            subsets_of_size(later, m)
                .map(|rest| table[&rest.with(j)])
                .max()
                .ok_or_else(|| Error::invariant(format!("no admissible subsets for k_{j}")))
        })
        .collect()
}

fn check_params(inst: &Instance, params: &DerivedParams) -> Result<()> {
    if params.n_clients != inst.n_clients() || params.n_unreliable != inst.n_unreliable() {
        return Err(Error::input(format!(
            "parameters for N={}, M={} used with an instance of N={}, M={}",
            params.n_clients,
            params.n_unreliable,
            inst.n_clients(),
            inst.n_unreliable()
        )));
    }
    Ok(())
}

/// Greedy re-labeling after which `k_1 >= k_2 >= ... >= k_{N-M}`.
///
/// Label `j` goes to the unlabeled client appearing in the highest-demand group among the
/// unlabeled clients; ties go to the smallest original index. The last `M` labels follow the
/// original order.
pub fn relabel_general(inst: &Instance) -> Result<Relabeling> {
    let params = DerivedParams::of(inst)?;
    let n = params.n_clients;
    let m = params.n_unreliable;
    let table = group_demand_table(inst);

    let mut remaining = inst.all_clients();
    let mut order = Vec::with_capacity(n);
    for _ in 1..=n - m {
        let mut best: Option<(usize, usize)> = None;
        for c in remaining.iter() {
            let value = subsets_of_size(remaining.without(c), m)
                .map(|rest| table[&rest.with(c)])
                .max()
                .expect("remaining holds at least M + 1 clients");
            if best.is_none_or(|(v, _)| value > v) {
                best = Some((value, c));
            }
        }
        let (_, chosen) = best.expect("remaining is nonempty");
        order.push(chosen);
        remaining.remove(chosen);
    }
    order.extend(remaining.iter());
    let relabeling = Relabeling::from_new_to_old(order)?;

    let k = k_family_from_table(&relabeling.apply(inst)?, &relabel_table(&table, &relabeling))?;
    if k.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invariant(format!(
            "greedy re-labeling produced non-monotone k = {k:?}"
        )));
    }
    Ok(relabeling)
}

fn relabel_table(
    table: &HashMap<ClientSet, usize>,
    relabeling: &Relabeling,
) -> HashMap<ClientSet, usize> {
    table
        .iter()
        .map(|(group, &v)| {
            let renamed: ClientSet = group.iter().map(|old| relabeling.new_of(old)).collect();
            (renamed, v)
        })
        .collect()
}

/// Sort key for the `M = 1` re-labeling: `|missing(i)| + exclusive(i)`.
///
/// Since `k_{i,j} = |missing(i)| - exclusive(j)`, `k_{i,j} >= k_{j,i}` exactly when
/// `w_i >= w_j`, so a descending sort achieves the full pairwise order.
pub fn m1_weight(inst: &Instance, client: usize) -> Result<usize> {
    inst.check_client(client)?;
    Ok(inst.missing_count_unchecked(client) + inst.exclusive_count_unchecked(client))
}

/// Stable descending sort by `m1_weight`; afterwards `k_{i,j} >= k_{j,i}` for all `i < j`.
pub fn relabel_m1(inst: &Instance) -> Result<Relabeling> {
    if inst.n_unreliable() != 1 {
        return Err(Error::input(format!(
            "relabel_m1 requires M = 1, got M = {}",
            inst.n_unreliable()
        )));
    }
    let n = inst.n_clients();
    let mut order: Vec<usize> = (1..=n).collect();
    let weights: Vec<usize> = order.iter().map(|&c| m1_weight(inst, c)).collect::<Result<_>>()?;
    order.sort_by(|&a, &b| weights[b - 1].cmp(&weights[a - 1]));
    let relabeling = Relabeling::from_new_to_old(order)?;

    let relabeled = relabeling.apply(inst)?;
    for i in 1..=n {
        for j in i + 1..=n {
            if k_pair_unchecked(&relabeled, i, j) < k_pair_unchecked(&relabeled, j, i) {
                return Err(Error::invariant(format!(
                    "after re-labeling k_({i},{j}) < k_({j},{i})"
                )));
            }
        }
    }
    Ok(relabeling)
}

/// Surrogate right-hand side `lambda_{m,n}` for the `M = 1` over-constrained LP, on an
/// instance already re-labeled by [`relabel_m1`].
pub fn lambda_pair(inst: &Instance, params: &DerivedParams, m: usize, n: usize) -> Result<i64> {
    check_params(inst, params)?;
    if params.n_unreliable != 1 {
        return Err(Error::input("lambda is only defined for M = 1"));
    }
    inst.check_client(m)?;
    inst.check_client(n)?;
    if m >= n {
        return Err(Error::input(format!("lambda_(m,n) needs m < n, got ({m},{n})")));
    }
    Ok(lambda_unchecked(inst, params, m, n))
}

pub(crate) fn lambda_unchecked(inst: &Instance, params: &DerivedParams, m: usize, n: usize) -> i64 {
    let big_n = params.n_clients;
    let split = big_n - params.q;
    let k = |i: usize, j: usize| k_pair_unchecked(inst, i, j) as i64;

    let middle = |m: usize, n: usize| k(m, big_n) - k(1, big_n) + k(1, n);
    if n <= split {
        let value = k(m, big_n) - k(1, big_n) + k(1, split) - k(split, big_n) + k(n, big_n);
        // the first two branches coincide on the boundary n = N - Q
        debug_assert!(n != split || value == middle(m, n));
        value
    } else if m <= split {
        middle(m, n)
    } else {
        k(1, m) - k(1, big_n) + k(split, big_n) - k(1, split) + k(1, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::*;

    /// Independent oracle for `(Q, R)`: scan every `Q`.
    fn params_by_search(n: usize, m: usize) -> (usize, usize) {
        let hits: Vec<(usize, usize)> = (1..=n)
            .filter_map(|q| {
                let total = (m + 1) * (q + 1);
                (total >= n && total - n <= m).then(|| (q, total - n))
            })
            .collect();
        assert_eq!(hits.len(), 1, "N={n} M={m} has {hits:?}");
        hits[0]
    }

    #[test]
    fn derive_params_examples() {
        let p = derive_params(7, 2).unwrap();
        assert_eq!((p.p, p.q, p.r), (4, 2, 2));
        let p = derive_params(4, 1).unwrap();
        assert_eq!((p.p, p.q, p.r), (2, 1, 0));
        let p = derive_params(3, 1).unwrap();
        assert_eq!((p.p, p.q, p.r), (1, 1, 1));
        assert!(matches!(derive_params(3, 2), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn derive_params_matches_exhaustive_search() {
        for n in 2..=40 {
            for m in 0..=n - 2 {
                let p = derive_params(n, m).unwrap();
                assert_eq!((p.q, p.r), params_by_search(n, m));
                assert_eq!(n, (m + 1) * (p.q + 1) - p.r);
                assert!(p.p >= 1);
            }
        }
    }

    #[test]
    fn k_pair_examples() {
        let b = instance_b();
        assert_eq!(k_pair(&b, 1, 2).unwrap(), 1);
        let c = instance_c();
        for i in 1..=4 {
            for j in 1..=4 {
                if i != j {
                    assert_eq!(k_pair(&c, i, j).unwrap(), 2);
                }
            }
        }
        assert_eq!(k_pair(&all_full(3, 1, 4), 1, 2).unwrap(), 0);
        assert!(k_pair(&b, 2, 2).is_err());
    }

    /// Oracle for `k_j`: enumerate size-P subsets and evaluate required sets directly.
    fn k_family_oracle(inst: &Instance) -> Vec<usize> {
        let n = inst.n_clients();
        let m = inst.n_unreliable();
        let p = n - m - 1;
        let all = inst.all_clients();
        (1..=n - m)
            .map(|j| {
                subsets_of_size(all, p)
                    .filter(|s| !s.contains(j) && (1..j).all(|i| s.contains(i)))
                    .flat_map(|s| {
                        let outside = s.complement(n);
                        outside
                            .iter()
                            .map(|i| inst.required_set(i, outside.without(i)).unwrap().len())
                            .collect::<Vec<_>>()
                    })
                    .max()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn k_family_examples() {
        let c = instance_c();
        let params = DerivedParams::of(&c).unwrap();
        assert_eq!(k_family(&c, &params).unwrap(), vec![2, 2, 2]);
        let b = instance_b();
        let params = DerivedParams::of(&b).unwrap();
        assert_eq!(k_family(&b, &params).unwrap(), vec![1, 1]);
        let full = all_full(6, 2, 5);
        let params = DerivedParams::of(&full).unwrap();
        assert_eq!(k_family(&full, &params).unwrap(), vec![0; 4]);
    }

    #[test]
    fn k_family_matches_oracle_on_random_instances() {
        for seed in 0..30 {
            let n = 4 + (seed as usize % 4);
            let m = 1 + (seed as usize % (n - 2));
            let inst = Instance::generate_random(n, m, 25, 0.5, seed).unwrap();
            let params = DerivedParams::of(&inst).unwrap();
            assert_eq!(k_family(&inst, &params).unwrap(), k_family_oracle(&inst), "seed {seed}");
        }
    }

    #[test]
    fn relabel_general_examples() {
        assert!(relabel_general(&instance_c()).unwrap().is_identity());
        assert!(relabel_general(&all_full(5, 2, 3)).unwrap().is_identity());
    }

    #[test]
    fn relabel_general_yields_monotone_k() {
        for seed in 0..40 {
            let n = 4 + (seed as usize % 5);
            let m = seed as usize % (n - 1);
            let inst = Instance::generate_random(n, m, 30, 0.4, 100 + seed).unwrap();
            let relabeling = relabel_general(&inst).unwrap();
            let relabeled = relabeling.apply(&inst).unwrap();
            let k = k_family_oracle(&relabeled);
            assert!(k.windows(2).all(|w| w[0] >= w[1]), "seed {seed}: {k:?}");
        }
    }

    #[test]
    fn relabel_m1_examples() {
        assert!(relabel_m1(&instance_b()).unwrap().is_identity());
        assert!(relabel_m1(&all_full(4, 1, 3)).unwrap().is_identity());
        let inst = Instance::from_lists(1, 3, &[vec![0, 1, 2], vec![0], vec![1]]).unwrap();
        let weights: Vec<usize> = (1..=3).map(|c| m1_weight(&inst, c).unwrap()).collect();
        assert_eq!(weights, vec![1, 2, 2]);
        let r = relabel_m1(&inst).unwrap();
        assert_eq!(r.new_to_old(), &[2, 3, 1]);
        let relabeled = r.apply(&inst).unwrap();
        for i in 1..=3 {
            for j in i + 1..=3 {
                assert!(k_pair(&relabeled, i, j).unwrap() >= k_pair(&relabeled, j, i).unwrap());
            }
        }
        assert!(relabel_m1(&instance_a()).is_err());
    }

    #[test]
    fn lambda_examples() {
        let c = instance_c();
        let params = DerivedParams::of(&c).unwrap();
        assert_eq!(lambda_pair(&c, &params, 1, 4).unwrap(), 2);
        assert_eq!(lambda_pair(&c, &params, 1, 3).unwrap(), 2);
        assert!(lambda_pair(&c, &params, 3, 3).is_err());
        assert!(lambda_pair(&c, &params, 4, 2).is_err());
    }

    #[test]
    fn relabeling_maps_values_back() {
        let r = Relabeling::from_new_to_old(vec![3, 1, 2]).unwrap();
        assert_eq!(r.to_original(&['a', 'b', 'c']), vec!['b', 'c', 'a']);
        assert_eq!(r.new_of(3), 1);
        assert_eq!(r.old_of(1), 3);
        assert!(Relabeling::from_new_to_old(vec![1, 1]).is_err());
    }
}

//! Client subsets as 64-bit masks.
//!
//! Client `c` (1-based, as everywhere at the API boundary) is bit `c - 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard limit on the number of clients any instance may have.
pub const MAX_CLIENTS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ClientSet(u64);

impl ClientSet {
    pub const EMPTY: ClientSet = ClientSet(0);

    pub const fn from_mask(mask: u64) -> Self {
        ClientSet(mask)
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    /// All clients `1..=n`.
    pub fn all(n: usize) -> Self {
        debug_assert!(n <= MAX_CLIENTS);
        if n == 64 {
            ClientSet(u64::MAX)
        } else {
            ClientSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(client: usize) -> Self {
        debug_assert!((1..=MAX_CLIENTS).contains(&client));
        ClientSet(1u64 << (client - 1))
    }

    /// Builds a set from 1-based client indices, checking each against `n_clients`.
    pub fn from_clients(clients: &[usize], n_clients: usize) -> Result<Self> {
        let mut mask = 0u64;
        for &c in clients {
            if c == 0 || c > n_clients {
                return Err(Error::ClientIndex {
                    index: c,
                    n_clients,
                });
            }
            mask |= 1u64 << (c - 1);
        }
        Ok(ClientSet(mask))
    }

    pub fn contains(self, client: usize) -> bool {
        (1..=MAX_CLIENTS).contains(&client) && self.0 >> (client - 1) & 1 == 1
    }

    pub fn insert(&mut self, client: usize) {
        self.0 |= 1u64 << (client - 1);
    }

    pub fn remove(&mut self, client: usize) {
        self.0 &= !(1u64 << (client - 1));
    }

    pub fn with(self, client: usize) -> Self {
        ClientSet(self.0 | 1u64 << (client - 1))
    }

    pub fn without(self, client: usize) -> Self {
        ClientSet(self.0 & !(1u64 << (client - 1)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        ClientSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ClientSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        ClientSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: Self) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Complement within `1..=n`.
    pub fn complement(self, n: usize) -> Self {
        ClientSet(Self::all(n).0 & !self.0)
    }

    /// Smallest member, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize + 1)
    }

    /// Members in increasing order (1-based).
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let bit = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(bit + 1)
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for ClientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for ClientSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = ClientSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl Serialize for ClientSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ClientSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let clients = Vec::<usize>::deserialize(deserializer)?;
        if let Some(&bad) = clients.iter().find(|&&c| c == 0 || c > MAX_CLIENTS) {
            return Err(serde::de::Error::custom(format!("client index {bad} out of range")));
        }
        Ok(clients.into_iter().collect())
    }
}

/// Iterates over every `size`-element subset of `universe`, in increasing mask order.
pub fn subsets_of_size(universe: ClientSet, size: usize) -> impl Iterator<Item = ClientSet> {
    let members: Vec<usize> = universe.to_vec();
    let n = members.len();
    // Gosper's hack over positions within `members`, then scatter back.
    let mut state: Option<u128> = (size <= n).then(|| (1u128 << size) - 1);
    let limit = 1u128 << n;
    std::iter::from_fn(move || {
        let current = state?;
        state = if current == 0 {
            None
        } else {
            let c = current & current.wrapping_neg();
            let r = current + c;
            let next = (((r ^ current) >> 2) / c) | r;
            (next < limit).then_some(next)
        };
        let mut out = ClientSet::EMPTY;
        let mut bits = current as u64;
        while bits != 0 {
            let pos = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            out.insert(members[pos]);
        }
        Some(out)
    })
}

/// Binomial coefficient, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_counts_match_binomials() {
        for n in 0..=10 {
            let universe = ClientSet::all(n);
            for k in 0..=n + 1 {
                let subsets: Vec<_> = subsets_of_size(universe, k).collect();
                assert_eq!(subsets.len() as u64, binomial(n, k), "n={n} k={k}");
                assert!(subsets.iter().all(|s| s.len() == k && s.is_subset(universe)));
                let mut dedup = subsets.clone();
                dedup.sort();
                dedup.dedup();
                assert_eq!(dedup.len(), subsets.len());
            }
        }
    }

    #[test]
    fn subsets_of_sparse_universe() {
        let universe = ClientSet::from_clients(&[2, 5, 7], 8).unwrap();
        let got: Vec<Vec<usize>> = subsets_of_size(universe, 2).map(|s| s.to_vec()).collect();
        assert_eq!(got, vec![vec![2, 5], vec![2, 7], vec![5, 7]]);
    }

    #[test]
    fn set_algebra() {
        let a = ClientSet::from_clients(&[1, 3], 4).unwrap();
        assert_eq!(a.complement(4).to_vec(), vec![2, 4]);
        assert_eq!(a.first(), Some(1));
        assert!(a.contains(3) && !a.contains(2));
        assert!(ClientSet::from_clients(&[5], 4).is_err());
        assert!(ClientSet::from_clients(&[0], 4).is_err());
        assert_eq!(ClientSet::all(64).len(), 64);
    }
}

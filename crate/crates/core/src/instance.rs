//! Problem instances: which client holds which packet.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clients::{ClientSet, MAX_CLIENTS};
use crate::error::{Error, Result};

/// Largest ground set accepted by validation.
pub const MAX_PACKETS: usize = 1 << 20;

const FORMAT_VERSION: u32 = 1;

/// Dense bit-vector over packet indices `0..n_packets`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PacketSet {
    n_packets: usize,
    words: Vec<u64>,
}

impl PacketSet {
    pub fn empty(n_packets: usize) -> Self {
        PacketSet {
            n_packets,
            words: vec![0; n_packets.div_ceil(64)],
        }
    }

    pub fn full(n_packets: usize) -> Self {
        let mut set = Self::empty(n_packets);
        for w in set.words.iter_mut() {
            *w = u64::MAX;
        }
        set.trim();
        set
    }

    pub fn from_indices(n_packets: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = Self::empty(n_packets);
        for p in indices {
            if p >= n_packets {
                return Err(Error::input(format!(
                    "packet index {p} out of range for {n_packets} packets"
                )));
            }
            set.insert(p);
        }
        Ok(set)
    }

    fn trim(&mut self) {
        let tail = self.n_packets % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn universe_size(&self) -> usize {
        self.n_packets
    }

    pub fn contains(&self, packet: usize) -> bool {
        packet < self.n_packets && self.words[packet / 64] >> (packet % 64) & 1 == 1
    }

    pub fn insert(&mut self, packet: usize) {
        assert!(packet < self.n_packets, "packet {packet} out of range");
        self.words[packet / 64] |= 1u64 << (packet % 64);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    fn zip_with(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.n_packets, other.n_packets, "packet universes differ");
        let mut out = PacketSet {
            n_packets: self.n_packets,
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect(),
        };
        out.trim();
        out
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> Self {
        let mut out = PacketSet {
            n_packets: self.n_packets,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.trim();
        out
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(&a, &b)| a & !b == 0)
    }
}

impl fmt::Debug for PacketSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Where a generated instance came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub alpha: f64,
    pub seed: u64,
}

/// Multiset of packet holder masks: for each distinct set of holders, how many packets have it.
///
/// Every count the LPs need is a sum over this profile, so it is computed once per instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HolderProfile {
    entries: Vec<(u64, usize)>,
}

impl HolderProfile {
    pub fn entries(&self) -> &[(u64, usize)] {
        &self.entries
    }

    /// Number of packets whose holder mask satisfies `pred`.
    pub fn count(&self, mut pred: impl FnMut(u64) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|(mask, _)| pred(*mask))
            .map(|(_, n)| n)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    n_unreliable: usize,
    n_packets: usize,
    sets: Vec<PacketSet>,
    provenance: Option<Provenance>,
    profile: HolderProfile,
}

impl Instance {
    /// Validates and builds an instance; `sets[c - 1]` is the packet set of client `c`.
    pub fn new(
        n_unreliable: usize,
        n_packets: usize,
        sets: Vec<PacketSet>,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        let n_clients = sets.len();
        if n_clients == 0 {
            return Err(Error::input("an instance needs at least one client"));
        }
        if n_clients > MAX_CLIENTS {
            return Err(Error::input(format!(
                "{n_clients} clients exceeds the limit of {MAX_CLIENTS}"
            )));
        }
        if n_unreliable >= n_clients {
            return Err(Error::input(format!(
                "n_unreliable = {n_unreliable} must be smaller than n_clients = {n_clients}"
            )));
        }
        if n_packets == 0 || n_packets > MAX_PACKETS {
            return Err(Error::input(format!(
                "n_packets = {n_packets} outside 1..={MAX_PACKETS}"
            )));
        }
        if let Some(bad) = sets.iter().position(|s| s.universe_size() != n_packets) {
            return Err(Error::input(format!(
                "set of client {} is over {} packets, expected {n_packets}",
                bad + 1,
                sets[bad].universe_size()
            )));
        }
        if let Some(p) = provenance {
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(Error::input(format!("alpha = {} outside (0, 1)", p.alpha)));
            }
        }

        let mut holders = vec![0u64; n_packets];
        for (c, set) in sets.iter().enumerate() {
            for p in set.iter() {
                holders[p] |= 1u64 << c;
            }
        }
        if let Some(p) = holders.iter().position(|&h| h == 0) {
            return Err(Error::UncoveredPacket(p));
        }
        let mut histogram: BTreeMap<u64, usize> = BTreeMap::new();
        for h in holders {
            *histogram.entry(h).or_default() += 1;
        }

        Ok(Instance {
            n_unreliable,
            n_packets,
            sets,
            provenance,
            profile: HolderProfile {
                entries: histogram.into_iter().collect(),
            },
        })
    }

    /// Convenience constructor from per-client packet index lists.
    pub fn from_lists(n_unreliable: usize, n_packets: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let sets = lists
            .iter()
            .enumerate()
            .map(|(c, list)| {
                PacketSet::from_indices(n_packets, list.iter().copied()).map_err(|_| {
                    let packet = list.iter().copied().find(|&p| p >= n_packets).unwrap_or(0);
                    Error::PacketIndex {
                        client: c + 1,
                        packet,
                        n_packets,
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_unreliable, n_packets, sets, None)
    }

    /// Draws an instance where each client holds each packet independently with probability
    /// `alpha`, resampling a packet's holders until at least one client holds it.
    pub fn generate_random(
        n_clients: usize,
        n_unreliable: usize,
        n_packets: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::input(format!("alpha = {alpha} outside (0, 1)")));
        }
        if n_clients < 2 {
            return Err(Error::input("n_clients must be at least 2"));
        }
        if n_clients > MAX_CLIENTS {
            return Err(Error::input(format!("n_clients must be at most {MAX_CLIENTS}")));
        }
        if n_packets == 0 || n_packets > MAX_PACKETS {
            return Err(Error::input(format!("n_packets outside 1..={MAX_PACKETS}")));
        }
        if n_unreliable >= n_clients {
            return Err(Error::input("n_unreliable must be smaller than n_clients"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sets = vec![PacketSet::empty(n_packets); n_clients];
        for p in 0..n_packets {
            let holders = loop {
                let mut mask = 0u64;
                for c in 0..n_clients {
                    if rng.gen_bool(alpha) {
                        mask |= 1u64 << c;
                    }
                }
                if mask != 0 {
                    break mask;
                }
            };
            for c in ClientSet::from_mask(holders).iter() {
                sets[c - 1].insert(p);
            }
        }
        Self::new(n_unreliable, n_packets, sets, Some(Provenance { alpha, seed }))
    }

    pub fn n_clients(&self) -> usize {
        self.sets.len()
    }

    pub fn n_unreliable(&self) -> usize {
        self.n_unreliable
    }

    pub fn n_packets(&self) -> usize {
        self.n_packets
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    pub fn profile(&self) -> &HolderProfile {
        &self.profile
    }

    pub fn all_clients(&self) -> ClientSet {
        ClientSet::all(self.n_clients())
    }

    /// Same packets, different unreliability budget.
    pub fn with_unreliable(&self, n_unreliable: usize) -> Result<Self> {
        Self::new(n_unreliable, self.n_packets, self.sets.clone(), self.provenance)
    }

    pub(crate) fn check_client(&self, client: usize) -> Result<()> {
        if client == 0 || client > self.n_clients() {
            Err(Error::ClientIndex {
                index: client,
                n_clients: self.n_clients(),
            })
        } else {
            Ok(())
        }
    }

    fn check_clients(&self, set: ClientSet) -> Result<()> {
        if set.is_subset(self.all_clients()) {
            Ok(())
        } else {
            Err(Error::input(format!(
                "client set {set:?} not within 1..={}",
                self.n_clients()
            )))
        }
    }

    /// Packets held by `client` (1-based).
    pub fn set(&self, client: usize) -> Result<&PacketSet> {
        self.check_client(client)?;
        Ok(&self.sets[client - 1])
    }

    pub fn sets(&self) -> &[PacketSet] {
        &self.sets
    }

    /// Packets `client` does not hold.
    pub fn missing_set(&self, client: usize) -> Result<PacketSet> {
        Ok(self.set(client)?.complement())
    }

    /// Packets some client outside `unreliable` holds but `client` lacks.
    pub fn required_set(&self, client: usize, unreliable: ClientSet) -> Result<PacketSet> {
        self.check_client(client)?;
        self.check_clients(unreliable)?;
        if unreliable.contains(client) {
            return Err(Error::input(format!(
                "client {client} is itself in the unreliable set {unreliable:?}"
            )));
        }
        let mut reliable_union = PacketSet::empty(self.n_packets);
        for c in unreliable.complement(self.n_clients()).iter() {
            reliable_union = reliable_union.union(&self.sets[c - 1]);
        }
        Ok(reliable_union.difference(&self.sets[client - 1]))
    }

    /// Size of the intersection of the required sets of all `survivors` under `unreliable`.
    pub fn demand_count(&self, survivors: ClientSet, unreliable: ClientSet) -> Result<usize> {
        self.check_clients(survivors)?;
        self.check_clients(unreliable)?;
        if survivors.is_empty() {
            return Err(Error::input("survivor set must be nonempty"));
        }
        if !survivors.is_disjoint(unreliable) {
            return Err(Error::input(format!(
                "survivors {survivors:?} and unreliable {unreliable:?} overlap"
            )));
        }
        Ok(self.demand_count_unchecked(survivors, unreliable))
    }

    /// A packet counts when some client outside `unreliable` holds it and no survivor does.
    pub(crate) fn demand_count_unchecked(&self, survivors: ClientSet, unreliable: ClientSet) -> usize {
        let s = survivors.mask();
        let reliable = !unreliable.mask();
        self.profile.count(|h| h & s == 0 && h & reliable != 0)
    }

    /// Packets held by `client` and nobody else.
    pub fn exclusive_count(&self, client: usize) -> Result<usize> {
        self.check_client(client)?;
        Ok(self.exclusive_count_unchecked(client))
    }

    pub(crate) fn exclusive_count_unchecked(&self, client: usize) -> usize {
        let only = ClientSet::singleton(client).mask();
        self.profile.count(|h| h == only)
    }

    pub(crate) fn missing_count_unchecked(&self, client: usize) -> usize {
        let bit = ClientSet::singleton(client).mask();
        self.profile.count(|h| h & bit == 0)
    }

    /// Instance whose client `new` is this instance's client `new_to_old[new - 1]`.
    pub fn permuted(&self, new_to_old: &[usize]) -> Result<Self> {
        let n = self.n_clients();
        let mut seen = vec![false; n];
        if new_to_old.len() != n
            || new_to_old
                .iter()
                .any(|&old| old == 0 || old > n || std::mem::replace(&mut seen[old - 1], true))
        {
            return Err(Error::input(format!(
                "{new_to_old:?} is not a permutation of 1..={n}"
            )));
        }
        let sets = new_to_old.iter().map(|&old| self.sets[old - 1].clone()).collect();
        Self::new(self.n_unreliable, self.n_packets, sets, self.provenance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk instance format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    n_clients: usize,
    n_unreliable: usize,
    n_packets: usize,
    alpha: Option<f64>,
    seed: Option<u64>,
    sets: Vec<Vec<usize>>,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            version: FORMAT_VERSION,
            n_clients: inst.n_clients(),
            n_unreliable: inst.n_unreliable,
            n_packets: inst.n_packets,
            alpha: inst.provenance.map(|p| p.alpha),
            seed: inst.provenance.map(|p| p.seed),
            sets: inst.sets.iter().map(|s| s.iter().collect()).collect(),
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance> {
        if self.version != FORMAT_VERSION {
            return Err(Error::input(format!(
                "version: unsupported instance format version {}",
                self.version
            )));
        }
        if self.sets.len() != self.n_clients {
            return Err(Error::input(format!(
                "sets: {} sets listed but n_clients = {}",
                self.sets.len(),
                self.n_clients
            )));
        }
        if self.n_packets == 0 || self.n_packets > MAX_PACKETS {
            return Err(Error::input(format!(
                "n_packets: {} outside 1..={MAX_PACKETS}",
                self.n_packets
            )));
        }
        for (c, list) in self.sets.iter().enumerate() {
            if let Some(&p) = list.iter().find(|&&p| p >= self.n_packets) {
                return Err(Error::PacketIndex {
                    client: c + 1,
                    packet: p,
                    n_packets: self.n_packets,
                });
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::input(format!(
                    "sets[{c}]: packet indices must be strictly increasing"
                )));
            }
        }
        let provenance = match (self.alpha, self.seed) {
            (Some(alpha), Some(seed)) => Some(Provenance { alpha, seed }),
            (None, None) => None,
            _ => return Err(Error::input("alpha/seed: both or neither must be present")),
        };
        let sets = self
            .sets
            .into_iter()
            .map(|list| PacketSet::from_indices(self.n_packets, list))
            .collect::<Result<Vec<_>>>()?;
        Instance::new(self.n_unreliable, self.n_packets, sets, provenance)
    }
}

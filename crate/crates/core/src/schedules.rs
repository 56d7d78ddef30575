//! Closed-form transmission schedules and schedules on the `1/P` grid.

use std::path::Path;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::quantities::{k_family, k_pair_unchecked, relabel_general, relabel_m1, DerivedParams, Relabeling};
use crate::{integer, ratio, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleProvenance {
    ClosedGeneral,
    ClosedM1,
    ClosedM0,
    LpExact,
}

impl ScheduleProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleProvenance::ClosedGeneral => "closed-general",
            ScheduleProvenance::ClosedM1 => "closed-m1",
            ScheduleProvenance::ClosedM0 => "closed-m0",
            ScheduleProvenance::LpExact => "lp-exact",
        }
    }
}

/// Per-client transmission counts, each a nonnegative multiple of `1 / p_divisor`.
/// Values are indexed by original client (`values[c - 1]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    p_divisor: usize,
    values: Vec<Rational>,
    provenance: ScheduleProvenance,
    relabeling: Relabeling,
}

impl Schedule {
    pub fn new(
        p_divisor: usize,
        values: Vec<Rational>,
        provenance: ScheduleProvenance,
        relabeling: Relabeling,
    ) -> Result<Self> {
        if p_divisor == 0 {
            return Err(Error::input("p_divisor must be positive"));
        }
        if relabeling.len() != values.len() {
            return Err(Error::input(format!(
                "relabeling over {} clients for a schedule of {}",
                relabeling.len(),
                values.len()
            )));
        }
        let p = integer(p_divisor);
        for (idx, v) in values.iter().enumerate() {
            if v.is_negative() || !(v * &p).is_integer() {
                return Err(Error::OffGrid {
                    client: idx + 1,
                    value: v.to_string(),
                    p_divisor,
                });
            }
        }
        Ok(Schedule {
            p_divisor,
            values,
            provenance,
            relabeling,
        })
    }

    /// Schedule from integer chunk counts `r_i * P`.
    pub fn from_counts(p_divisor: usize, counts: &[u64], provenance: ScheduleProvenance) -> Result<Self> {
        if p_divisor == 0 {
            return Err(Error::input("p_divisor must be positive"));
        }
        let values = counts.iter().map(|&c| ratio(c, p_divisor)).collect();
        Self::new(p_divisor, values, provenance, Relabeling::identity(counts.len()))
    }

    pub fn zero(n_clients: usize, p_divisor: usize) -> Result<Self> {
        Self::from_counts(p_divisor, &vec![0; n_clients], ScheduleProvenance::LpExact)
    }

    pub fn p_divisor(&self) -> usize {
        self.p_divisor
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn n_clients(&self) -> usize {
        self.values.len()
    }

    pub fn provenance(&self) -> ScheduleProvenance {
        self.provenance
    }

    pub fn relabeling(&self) -> &Relabeling {
        &self.relabeling
    }

    /// `r_i * P` for each client.
    pub fn counts(&self) -> Vec<u64> {
        let p = integer(self.p_divisor);
        self.values
            .iter()
            .map(|v| {
                let scaled = (v * &p).to_integer();
                u64::try_from(scaled).expect("validated nonnegative grid value fits in u64")
            })
            .collect()
    }

    pub fn total(&self) -> Rational {
        total(&self.values)
    }

    /// Copy with one client's count lowered by one chunk.
    pub fn decremented(&self, client: usize) -> Result<Self> {
        if client == 0 || client > self.n_clients() {
            return Err(Error::ClientIndex {
                index: client,
                n_clients: self.n_clients(),
            });
        }
        let mut values = self.values.clone();
        values[client - 1] -= ratio(1, self.p_divisor);
        Self::new(self.p_divisor, values, self.provenance, self.relabeling.clone())
    }

    pub fn to_json(&self) -> String {
        let file = ScheduleFile {
            version: 1,
            p_divisor: self.p_divisor,
            counts: self.counts(),
            provenance: self.provenance,
        };
        serde_json::to_string_pretty(&file).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScheduleFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(Error::input(format!("unsupported schedule version {}", file.version)));
        }
        Self::from_counts(file.p_divisor, &file.counts, file.provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    version: u32,
    p_divisor: usize,
    counts: Vec<u64>,
    provenance: ScheduleProvenance,
}

pub fn total(values: &[Rational]) -> Rational {
    values.iter().sum()
}

/// Rounds each component up to the next multiple of `1/p_divisor`.
pub fn round_to_grid(values: &[Rational], p_divisor: usize) -> Result<Schedule> {
    if p_divisor == 0 {
        return Err(Error::input("p_divisor must be positive"));
    }
    let p = integer(p_divisor);
    let rounded = values
        .iter()
        .map(|v| Rational::new((v * &p).ceil().to_integer(), p.to_integer()))
        .collect();
    Schedule::new(p_divisor, rounded, ScheduleProvenance::LpExact, Relabeling::identity(values.len()))
}

/// A closed form evaluated without the nonnegativity check.
///
/// `relabeled[l - 1]` is the value for new label `l`; `common` is the shared offset `r~`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedForm {
    pub params: DerivedParams,
    pub relabeling: Relabeling,
    pub common: Rational,
    pub relabeled: Vec<Rational>,
    pub provenance: ScheduleProvenance,
}

impl ClosedForm {
    pub fn total(&self) -> Rational {
        total(&self.relabeled)
    }

    /// Values indexed by original client.
    pub fn original_values(&self) -> Vec<Rational> {
        self.relabeling.to_original(&self.relabeled)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.relabeled.iter().all(|v| !v.is_negative())
    }

    pub fn into_schedule(self) -> Result<Schedule> {
        if let Some(new) = self.relabeled.iter().position(|v| v.is_negative()) {
            return Err(Error::OutOfRegime {
                client: self.relabeling.old_of(new + 1),
                value: self.relabeled[new].to_string(),
            });
        }
        let values = self.original_values();
        Schedule::new(self.params.p, values, self.provenance, self.relabeling)
    }
}

/// `M = 0`: `r~_i = sum_j |missing_j| / (N - 1) - |missing_i|`, no re-labeling.
pub fn evaluate_m0(inst: &Instance) -> Result<ClosedForm> {
    if inst.n_unreliable() != 0 {
        return Err(Error::input(format!(
            "the M = 0 closed form needs M = 0, got M = {}",
            inst.n_unreliable()
        )));
    }
    let params = DerivedParams::of(inst)?;
    let n = inst.n_clients();
    let missing: Vec<usize> = (1..=n).map(|c| inst.missing_count_unchecked(c)).collect();
    let common = ratio(missing.iter().sum::<usize>(), n - 1);
    let relabeled = missing.iter().map(|&x| &common - integer(x)).collect();
    Ok(ClosedForm {
        params,
        relabeling: Relabeling::identity(n),
        common,
        relabeled,
        provenance: ScheduleProvenance::ClosedM0,
    })
}

/// General `M`: re-label so `k_1 >= ... >= k_{N-M}`, then
/// `r~ = sum_{i<=Q} k_i / P + (P - Q + 1) k_{Q+1} / P`, `r~_i = r~ - k_{min(i, Q+1)}`.
pub fn evaluate_general(inst: &Instance) -> Result<ClosedForm> {
    let params = DerivedParams::of(inst)?;
    let relabeling = relabel_general(inst)?;
    let relabeled_inst = relabeling.apply(inst)?;
    let k = k_family(&relabeled_inst, &params)?;
    let (n, p, q) = (params.n_clients, params.p, params.q);

    let head: usize = k[..q].iter().sum();
    let pivot = k[q];
    let common = ratio(head, p) + ratio((p + 1 - q) as i64 * pivot as i64, p);
    let relabeled: Vec<Rational> = (1..=n).map(|i| &common - integer(k[(i - 1).min(q)])).collect();

    let expected = ratio((n - p) * head, p) + ratio((n as i64 + q as i64 * (p as i64 - n as i64)) * pivot as i64, p);
    let got = total(&relabeled);
    if got != expected {
        return Err(Error::invariant(format!("general closed-form total {got} differs from {expected}")));
    }
    Ok(ClosedForm {
        params,
        relabeling,
        common,
        relabeled,
        provenance: ScheduleProvenance::ClosedGeneral,
    })
}

/// `M = 1`: re-label by the pairwise order, then evaluate the pair-indexed closed form.
pub fn evaluate_m1(inst: &Instance) -> Result<ClosedForm> {
    if inst.n_unreliable() != 1 {
        return Err(Error::input(format!(
            "the M = 1 closed form needs M = 1, got M = {}",
            inst.n_unreliable()
        )));
    }
    let params = DerivedParams::of(inst)?;
    let relabeling = relabel_m1(inst)?;
    let relabeled_inst = relabeling.apply(inst)?;
    let k = |i: usize, j: usize| k_pair_unchecked(&relabeled_inst, i, j) as i64;
    let (n, p, q, r) = (params.n_clients, params.p as i64, params.q as i64, params.r as i64);
    let split = n - params.q;

    let mut scaled = q * k(split, n) + (split as i64 - 1) * k(1, split);
    scaled += (1..split).map(|i| k(i, n)).sum::<i64>();
    scaled += (split + 1..n).map(|i| k(1, i)).sum::<i64>();
    let common = ratio(scaled, p);
    let relabeled: Vec<Rational> = (1..=n)
        .map(|i| {
            let drop = if i <= split { k(i, n) + k(1, split) } else { k(split, n) + k(1, i) };
            &common - integer(drop)
        })
        .collect();

    let mut expected = (2 - p) * k(1, n) + r * k(split, n) + (2 - r) * k(1, split);
    expected += (2..split).map(|i| 2 * k(i, n)).sum::<i64>();
    expected += (split + 1..n).map(|i| 2 * k(1, i)).sum::<i64>();
    let expected = ratio(expected, p);
    let got = total(&relabeled);
    if got != expected {
        return Err(Error::invariant(format!("M = 1 closed-form total {got} differs from {expected}")));
    }
    Ok(ClosedForm {
        params,
        relabeling,
        common,
        relabeled,
        provenance: ScheduleProvenance::ClosedM1,
    })
}

pub fn closed_form_m0(inst: &Instance) -> Result<Schedule> {
    evaluate_m0(inst)?.into_schedule()
}

pub fn closed_form_general(inst: &Instance) -> Result<Schedule> {
    evaluate_general(inst)?.into_schedule()
}

pub fn closed_form_m1(inst: &Instance) -> Result<Schedule> {
    evaluate_m1(inst)?.into_schedule()
}

/// The `N` pairs `(m, n)` (new labels) whose `M = 1` constraints the closed form meets with
/// equality: `(j, N)` for `j <= N - Q` and `(1, j)` for `N - Q <= j < N`.
pub fn m1_tight_pairs(params: &DerivedParams) -> Vec<(usize, usize)> {
    let n = params.n_clients;
    let split = n - params.q;
    let mut pairs: Vec<(usize, usize)> = (1..=split).map(|j| (j, n)).collect();
    pairs.extend((split..n).map(|j| (1, j)));
    pairs
}

/// Whether every value is a multiple of `1/p_divisor`.
pub fn on_grid(values: &[Rational], p_divisor: usize) -> bool {
    let p = integer(p_divisor);
    values.iter().all(|v| (v * &p).is_integer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::*;
    use num_traits::Zero;

    fn ints(values: &[i64]) -> Vec<Rational> {
        values.iter().map(|&v| integer(v)).collect()
    }

    #[test]
    fn m0_examples() {
        let s = closed_form_m0(&instance_a()).unwrap();
        assert_eq!(s.values(), ints(&[1, 1, 1]).as_slice());
        assert_eq!(s.total(), integer(3));
        let s = closed_form_m0(&all_full(4, 0, 5)).unwrap();
        assert!(s.values().iter().all(Zero::is_zero));
        let k = 6;
        let two = Instance::from_lists(0, k, &[(0..k).collect(), vec![]]).unwrap();
        let s = closed_form_m0(&two).unwrap();
        assert_eq!(s.values(), ints(&[k as i64, 0]).as_slice());
        assert!(closed_form_m0(&instance_b()).is_err());
    }

    #[test]
    fn general_examples() {
        let c = evaluate_general(&instance_c()).unwrap();
        assert_eq!(c.common, integer(3));
        assert_eq!(c.into_schedule().unwrap().values(), ints(&[1, 1, 1, 1]).as_slice());
        let b = evaluate_general(&instance_b()).unwrap();
        assert_eq!(b.common, integer(2));
        assert_eq!(b.total(), integer(3));
        let full = closed_form_general(&all_full(7, 2, 9)).unwrap();
        assert!(full.values().iter().all(Zero::is_zero));
    }

    #[test]
    fn m1_examples() {
        let b = evaluate_m1(&instance_b()).unwrap();
        assert_eq!(b.common, integer(3));
        assert_eq!(b.into_schedule().unwrap().counts(), vec![1, 1, 1]);
        let c = evaluate_m1(&instance_c()).unwrap();
        assert_eq!(c.common, integer(5));
        let s = c.into_schedule().unwrap();
        assert_eq!(s.values(), ints(&[1, 1, 1, 1]).as_slice());
        assert_eq!(s.total(), integer(4));
        assert_eq!(s.p_divisor(), 2);
        let full = closed_form_m1(&all_full(6, 1, 9)).unwrap();
        assert!(full.total().is_zero());
        assert!(closed_form_m1(&instance_a()).is_err());
    }

    #[test]
    fn general_ordering_in_relabeled_coordinates() {
        for seed in 0..40 {
            let n = 4 + seed as usize % 4;
            let m = 1 + seed as usize % (n - 3);
            let inst = Instance::generate_random(n, m, 30, 0.5, seed).unwrap();
            let form = evaluate_general(&inst).unwrap();
            let q = form.params.q;
            let v = &form.relabeled;
            assert!(v[..=q].windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {v:?}");
            assert!(v[q..].iter().all(|x| *x == v[q]));
            assert!(on_grid(v, form.params.p));
        }
    }

    #[test]
    fn m1_values_on_grid() {
        for seed in 0..40 {
            let inst = Instance::generate_random(3 + seed as usize % 6, 1, 25, 0.5, seed).unwrap();
            let form = evaluate_m1(&inst).unwrap();
            assert!(on_grid(&form.relabeled, form.params.p));
        }
    }

    #[test]
    fn tight_pairs_count() {
        for n in 3..12 {
            let params = DerivedParams::new(n, 1).unwrap();
            let pairs = m1_tight_pairs(&params);
            assert_eq!(pairs.len(), n);
            let mut dedup = pairs.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), n);
        }
    }

    #[test]
    fn rounding() {
        let s = round_to_grid(&[ratio(1, 3)], 2).unwrap();
        assert_eq!(s.values(), &[ratio(1, 2)]);
        let on = vec![ratio(3, 4), integer(2)];
        assert_eq!(round_to_grid(&on, 4).unwrap().values(), on.as_slice());
        let raw = vec![ratio(1, 7), ratio(5, 3), ratio(2, 9)];
        let rounded = round_to_grid(&raw, 3).unwrap();
        let increase = rounded.total() - total(&raw);
        assert!(!increase.is_negative() && increase < ratio(3, 3));
    }

    #[test]
    fn off_grid_and_negative_rejected() {
        let r = Schedule::new(2, vec![ratio(1, 3)], ScheduleProvenance::LpExact, Relabeling::identity(1));
        assert!(matches!(r, Err(Error::OffGrid { client: 1, .. })));
        let r = Schedule::new(2, vec![integer(-1)], ScheduleProvenance::LpExact, Relabeling::identity(1));
        assert!(r.is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = closed_form_m1(&instance_c()).unwrap();
        let text = s.to_json();
        assert!(text.contains("\"closed-m1\""));
        let back = Schedule::from_json(&text).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.counts(), vec![2, 2, 2, 2]);
        assert!(Schedule::from_json(r#"{"version":2,"p_divisor":1,"counts":[],"provenance":"lp-exact"}"#).is_err());
    }
}

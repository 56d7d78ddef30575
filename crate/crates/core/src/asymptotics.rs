//! Large-`K` behaviour: limiting per-packet demands, the monotone functions used to show the
//! closed forms become feasible, and Monte Carlo experiments.

use std::io::{Read, Write};

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clients::ClientSet;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{build_full, check_feasible};
use crate::schedules::{evaluate_general, evaluate_m1};
use crate::simplex::solve_exact;
use crate::{format_rational, integer, parse_rational, Rational};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_zparams(n_clients: usize, n_unreliable: usize, subset_size: usize) -> Result<()> {
    if n_unreliable >= n_clients || subset_size == 0 || subset_size + n_unreliable + 1 > n_clients {
        return Err(Error::input(format!(
            "need 1 <= V <= N - M - 1, got N = {n_clients}, M = {n_unreliable}, V = {subset_size}"
        )));
    }
    Ok(())
}

/// Limit of `demand / K` for a constraint on `V` clients against `M` unreliable ones:
/// `((1-a)^(N-M-V) - (1-a)^(N-M)) / (1 - (1-a)^N)`.
pub fn z_value(n_unreliable: usize, subset_size: usize, n_clients: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_zparams(n_clients, n_unreliable, subset_size)?;
    let miss = 1.0 - alpha;
    let survivors = (n_clients - n_unreliable - subset_size) as i32;
    let reliable = (n_clients - n_unreliable) as i32;
    Ok((miss.powi(survivors) - miss.powi(reliable)) / (1.0 - miss.powi(n_clients as i32)))
}

/// Same quantity written with negative exponents:
/// `((1-a)^(-M-V) - (1-a)^(-M)) / ((1-a)^(-N) - 1)`.
pub fn z_value_negative_exponents(n_unreliable: usize, subset_size: usize, n_clients: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_zparams(n_clients, n_unreliable, subset_size)?;
    let miss = 1.0 - alpha;
    let m = n_unreliable as i32;
    let v = subset_size as i32;
    Ok((miss.powi(-m - v) - miss.powi(-m)) / (miss.powi(-(n_clients as i32)) - 1.0))
}

/// `((1-a)^(P-V) - (1-a)^P) / (1 - (1-a)^P)`.
pub fn phi(alpha: f64, p: usize, v: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if v > p || p == 0 {
        return Err(Error::input(format!("phi needs 0 <= V <= P, P >= 1, got P = {p}, V = {v}")));
    }
    let miss = 1.0 - alpha;
    Ok((miss.powi((p - v) as i32) - miss.powi(p as i32)) / (1.0 - miss.powi(p as i32)))
}

/// `(1 - (1-a)^n) / (1 - (1-a)^(n+1))`.
pub fn gamma(alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    let miss = 1.0 - alpha;
    Ok((1.0 - miss.powi(n as i32)) / (1.0 - miss.powi(n as i32 + 1)))
}

fn check_alpha_exact(alpha: &Rational) -> Result<()> {
    if alpha.is_positive() && *alpha < Rational::one() {
        Ok(())
    } else {
        Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn z_value_exact(n_unreliable: usize, subset_size: usize, n_clients: usize, alpha: &Rational) -> Result<Rational> {
    check_alpha_exact(alpha)?;
    check_zparams(n_clients, n_unreliable, subset_size)?;
    let miss = Rational::one() - alpha;
    let pow = |e: usize| num_traits::pow(miss.clone(), e);
    let num = pow(n_clients - n_unreliable - subset_size) - pow(n_clients - n_unreliable);
    Ok(num / (Rational::one() - pow(n_clients)))
}

pub fn phi_exact(alpha: &Rational, p: usize, v: usize) -> Result<Rational> {
    check_alpha_exact(alpha)?;
    if v > p || p == 0 {
        return Err(Error::input(format!("phi needs 0 <= V <= P, P >= 1, got P = {p}, V = {v}")));
    }
    let miss = Rational::one() - alpha;
    let pow = |e: usize| num_traits::pow(miss.clone(), e);
    Ok((pow(p - v) - pow(p)) / (Rational::one() - pow(p)))
}

pub fn gamma_exact(alpha: &Rational, n: usize) -> Result<Rational> {
    check_alpha_exact(alpha)?;
    let miss = Rational::one() - alpha;
    let pow = |e: usize| num_traits::pow(miss.clone(), e);
    Ok((Rational::one() - pow(n)) / (Rational::one() - pow(n + 1)))
}

/// One Monte Carlo estimate of a limiting demand.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZSample {
    pub n_clients: usize,
    pub n_unreliable: usize,
    pub subset_size: usize,
    pub alpha: f64,
    pub n_packets: usize,
    pub empirical: f64,
    pub limit: f64,
    /// Four binomial standard deviations of the empirical fraction.
    pub envelope: f64,
}

impl ZSample {
    pub fn within_envelope(&self) -> bool {
        (self.empirical - self.limit).abs() < self.envelope
    }
}

/// Draws one instance and measures `demand / K` for every `V` in `1..=P`, taking the last
/// `M` clients as unreliable and the first `V` reliable clients as the constraint subset.
pub fn z_samples(n_clients: usize, n_unreliable: usize, alpha: f64, n_packets: usize, seed: u64) -> Result<Vec<ZSample>> {
    let inst = Instance::generate_random(n_clients, n_unreliable, n_packets, alpha, seed)?;
    let reliable_count = n_clients - n_unreliable;
    let unreliable: ClientSet = (reliable_count + 1..=n_clients).collect();
    (1..reliable_count)
        .map(|v| {
            let survivors: ClientSet = (v + 1..=reliable_count).collect();
            let demand = inst.demand_count(survivors, unreliable)?;
            let limit = z_value(n_unreliable, v, n_clients, alpha)?;
            Ok(ZSample {
                n_clients,
                n_unreliable,
                subset_size: v,
                alpha,
                n_packets,
                empirical: demand as f64 / n_packets as f64,
                limit,
                envelope: 4.0 * (limit * (1.0 - limit) / n_packets as f64).sqrt(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedMethod {
    ClosedM1,
    ClosedGeneral,
}

impl ClosedMethod {
    /// The pair-indexed form when `M = 1`, the general form otherwise.
    pub fn for_unreliable(n_unreliable: usize) -> Self {
        if n_unreliable == 1 {
            ClosedMethod::ClosedM1
        } else {
            ClosedMethod::ClosedGeneral
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_clients: usize,
    pub n_unreliable: usize,
    pub alpha: f64,
    pub packet_counts: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub seed: u64,
    pub n_clients: usize,
    pub n_unreliable: usize,
    pub n_packets: usize,
    pub alpha: f64,
    pub method: ClosedMethod,
    pub closed_total: Rational,
    pub lp_opt: Rational,
    pub gap_per_packet: f64,
    pub feasible_for_full: bool,
}

fn instance_seed(seed: u64, n_packets: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n_packets as u64
}

/// One run: closed form versus the exact optimum of the full LP.
pub fn experiment_row(
    n_clients: usize,
    n_unreliable: usize,
    alpha: f64,
    n_packets: usize,
    seed: u64,
) -> Result<ExperimentRow> {
    let inst = Instance::generate_random(n_clients, n_unreliable, n_packets, alpha, instance_seed(seed, n_packets))?;
    let method = ClosedMethod::for_unreliable(n_unreliable);
    let form = match method {
        ClosedMethod::ClosedM1 => evaluate_m1(&inst)?,
        ClosedMethod::ClosedGeneral => evaluate_general(&inst)?,
    };
    let lp = build_full(&inst)?;
    let optimum = solve_exact(&lp)?.value;
    let values = form.original_values();
    let feasible = form.is_nonnegative() && check_feasible(&lp, &values)?.is_empty();
    let closed_total = form.total();
    let gap = (&closed_total - &optimum) / integer(n_packets);
    Ok(ExperimentRow {
        seed,
        n_clients,
        n_unreliable,
        n_packets,
        alpha,
        method,
        closed_total,
        lp_opt: optimum,
        gap_per_packet: rational_to_f64(&gap),
        feasible_for_full: feasible,
    })
}

fn rational_to_f64(value: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    value.to_f64().unwrap_or(f64::NAN)
}

/// Runs every `(K, seed)` pair in parallel; rows come back sorted by `(K, seed)`.
pub fn convergence_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    check_alpha(config.alpha)?;
    let jobs: Vec<(usize, u64)> = config
        .packet_counts
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(k, seed)| experiment_row(config.n_clients, config.n_unreliable, config.alpha, k, seed))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n_packets, r.seed));
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketCountSummary {
    pub n_packets: usize,
    pub runs: usize,
    pub median_gap: f64,
    pub zero_gap_fraction: f64,
    pub feasible_fraction: f64,
}

/// Per-`K` median gap and the fractions of zero-gap and feasible runs.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<PacketCountSummary> {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.n_packets).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let group: Vec<&ExperimentRow> = rows.iter().filter(|r| r.n_packets == k).collect();
            let mut gaps: Vec<f64> = group.iter().map(|r| r.gap_per_packet).collect();
            gaps.sort_by(f64::total_cmp);
            let mid = gaps.len() / 2;
            let median = if gaps.len() % 2 == 1 { gaps[mid] } else { (gaps[mid - 1] + gaps[mid]) / 2.0 };
            let runs = group.len();
            PacketCountSummary {
                n_packets: k,
                runs,
                median_gap: median,
                zero_gap_fraction: group.iter().filter(|r| r.closed_total == r.lp_opt).count() as f64 / runs as f64,
                feasible_fraction: group.iter().filter(|r| r.feasible_for_full).count() as f64 / runs as f64,
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    seed: u64,
    #[serde(rename = "N")]
    n_clients: usize,
    #[serde(rename = "M")]
    n_unreliable: usize,
    #[serde(rename = "K")]
    n_packets: usize,
    alpha: f64,
    method: ClosedMethod,
    closed_total: String,
    lp_opt: String,
    gap_per_packet: f64,
    feasible_for_full: bool,
}

pub fn write_csv(rows: &[ExperimentRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in rows {
        writer.serialize(CsvRow {
            seed: r.seed,
            n_clients: r.n_clients,
            n_unreliable: r.n_unreliable,
            n_packets: r.n_packets,
            alpha: r.alpha,
            method: r.method,
            closed_total: format_rational(&r.closed_total),
            lp_opt: format_rational(&r.lp_opt),
            gap_per_packet: r.gap_per_packet,
            feasible_for_full: r.feasible_for_full,
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(ExperimentRow {
                seed: row.seed,
                n_clients: row.n_clients,
                n_unreliable: row.n_unreliable,
                n_packets: row.n_packets,
                alpha: row.alpha,
                method: row.method,
                closed_total: parse_rational(&row.closed_total)?,
                lp_opt: parse_rational(&row.lp_opt)?,
                gap_per_packet: row.gap_per_packet,
                feasible_for_full: row.feasible_for_full,
            })
        })
        .collect()
}

/// Whether `V/P > Z_{M,V} / Z_{M,P}` holds exactly for every `1 <= V < P`.
pub fn subset_ratio_inequality_holds(n_clients: usize, n_unreliable: usize, alpha: &Rational) -> Result<bool> {
    let p = n_clients - n_unreliable - 1;
    let z_full = z_value_exact(n_unreliable, p, n_clients, alpha)?;
    if z_full.is_zero() {
        return Err(Error::invariant("Z_{M,P} vanished"));
    }
    for v in 1..p {
        let z = z_value_exact(n_unreliable, v, n_clients, alpha)?;
        if crate::ratio(v, p) <= z / &z_full {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio;

    #[test]
    fn z_examples() {
        assert!((z_value(0, 1, 3, 0.5).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert!((z_value(1, 1, 3, 0.5).unwrap() - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(z_value_exact(0, 1, 3, &ratio(1, 2)).unwrap(), ratio(1, 7));
        assert_eq!(z_value_exact(1, 1, 3, &ratio(1, 2)).unwrap(), ratio(2, 7));
        assert!(z_value(0, 1, 3, 1.0).is_err());
        assert!(z_value(1, 2, 3, 0.5).is_err());
    }

    #[test]
    fn z_forms_agree_and_increase_in_subset_size() {
        for n in 2..=10 {
            for m in 0..n - 1 {
                for &alpha in &[0.05, 0.3, 0.5, 0.7, 0.95] {
                    let mut previous = 0.0;
                    for v in 1..n - m {
                        let a = z_value(m, v, n, alpha).unwrap();
                        let b = z_value_negative_exponents(m, v, n, alpha).unwrap();
                        assert!((a - b).abs() < 1e-9 * a.max(1e-300), "N={n} M={m} V={v}");
                        assert!(a > previous);
                        previous = a;
                    }
                }
            }
        }
    }

    #[test]
    fn phi_limits() {
        assert!(phi(1.0 - 1e-12, 5, 2).unwrap().abs() < 1e-9);
        for p in 1..=8 {
            for v in 0..=p {
                let near_zero = phi(1e-6, p, v).unwrap();
                assert!((near_zero - v as f64 / p as f64).abs() < 1e-4, "P={p} V={v}");
            }
        }
    }

    #[test]
    fn gamma_lower_bound() {
        for n in 1..=10 {
            let bound = ratio(n, n + 1);
            let mut previous: Option<Rational> = None;
            for a in 1..100 {
                let g = gamma_exact(&ratio(a, 100), n).unwrap();
                assert!(g > bound);
                if let Some(p) = previous {
                    assert!(g > p);
                }
                previous = Some(g);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let config = ExperimentConfig {
            n_clients: 4,
            n_unreliable: 1,
            alpha: 0.5,
            packet_counts: vec![20, 40],
            seeds: vec![2, 1],
        };
        let rows = convergence_experiment(&config).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[0].n_packets, rows[0].seed), (20, 1));
        let mut buffer = Vec::new();
        write_csv(&rows, &mut buffer).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.starts_with("seed,N,M,K,alpha,method,closed_total,lp_opt,gap_per_packet,feasible_for_full"));
        assert_eq!(read_csv(buffer.as_slice()).unwrap(), rows);
    }

    #[test]
    fn all_full_instances_have_zero_gap() {
        let inst = crate::instance::fixtures::all_full(5, 1, 30);
        let form = evaluate_m1(&inst).unwrap();
        let lp = build_full(&inst).unwrap();
        assert_eq!(form.total(), solve_exact(&lp).unwrap().value);
    }
}

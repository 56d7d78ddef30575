//! Random linear network coding simulation of a schedule.
//!
//! Every packet is split into `P` chunks (chunk `packet * P + c`). Client `i` broadcasts
//! `r_i * P` random combinations of its own chunks. For each unreliable set `I` of size `M`
//! all transmissions from `I` are dropped, and each remaining client must decode every chunk
//! that some other surviving client holds and it lacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::clients::{subsets_of_size, ClientSet};
use crate::error::{Error, Result};
use crate::gf::{Eliminator, Field};
use crate::instance::Instance;
use crate::schedules::Schedule;

pub const DEFAULT_FIELD_BITS: u32 = 16;
pub const DEFAULT_RETRIES: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClientVerdict {
    pub client: usize,
    pub decoded: bool,
    /// Chunks the client must recover under this unreliable set.
    pub required_chunks: usize,
    /// Rank deficit: chunks still undetermined after elimination.
    pub missing_chunks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdversaryVerdict {
    pub unreliable: ClientSet,
    pub clients: Vec<ClientVerdict>,
    /// Attempts (out of `SimulationReport::attempts`) in which some client failed.
    pub failed_attempts: usize,
}

impl AdversaryVerdict {
    pub fn success(&self) -> bool {
        self.clients.iter().all(|c| c.decoded)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationReport {
    pub field_bits: u32,
    pub seed: u64,
    pub p_divisor: usize,
    pub max_retries: usize,
    pub attempts: usize,
    /// The last attempt still had a decoding failure.
    pub persistent_failure: bool,
    /// Verdicts of the last attempt, one per unreliable set.
    pub sets: Vec<AdversaryVerdict>,
}

impl SimulationReport {
    pub fn all_success(&self) -> bool {
        !self.persistent_failure
    }

    pub fn failed_sets(&self) -> impl Iterator<Item = &AdversaryVerdict> {
        self.sets.iter().filter(|s| !s.success())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One coded broadcast.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransmissionRecord {
    pub sender: usize,
    /// Coefficients over all `K * P` chunks; zero outside the sender's packets.
    pub coefficients: Vec<u16>,
}

/// Draws the transmissions of one run.
pub fn draw_transmissions(
    inst: &Instance,
    schedule: &Schedule,
    field: &Field,
    rng: &mut impl Rng,
) -> Vec<TransmissionRecord> {
    let p = schedule.p_divisor();
    let width = inst.n_packets() * p;
    let mut out = Vec::new();
    for (idx, &count) in schedule.counts().iter().enumerate() {
        let sender = idx + 1;
        let held: Vec<usize> = inst.sets()[idx].iter().collect();
        for _ in 0..count {
            let mut coefficients = vec![0u16; width];
            for &packet in &held {
                for c in 0..p {
                    coefficients[packet * p + c] = rng.gen_range(0..field.order()) as u16;
                }
            }
            out.push(TransmissionRecord { sender, coefficients });
        }
    }
    out
}

pub fn simulate(inst: &Instance, schedule: &Schedule, field_bits: u32, seed: u64) -> Result<SimulationReport> {
    simulate_with_retries(inst, schedule, field_bits, 0, seed)
}

/// Runs up to `1 + max_retries` attempts, redrawing all coefficients each time, and stops at
/// the first attempt in which every client decodes under every unreliable set.
pub fn simulate_with_retries(
    inst: &Instance,
    schedule: &Schedule,
    field_bits: u32,
    max_retries: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if schedule.n_clients() != inst.n_clients() {
        return Err(Error::input(format!(
            "schedule for {} clients used with an instance of {}",
            schedule.n_clients(),
            inst.n_clients()
        )));
    }
    let field = Field::new(field_bits)?;
    let adversaries: Vec<ClientSet> = subsets_of_size(inst.all_clients(), inst.n_unreliable()).collect();
    let mut failed_attempts = vec![0usize; adversaries.len()];
    let mut attempts = 0;
    let mut last = Vec::new();
    for attempt in 0..=max_retries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let transmissions = draw_transmissions(inst, schedule, &field, &mut rng);
        let verdicts: Vec<Vec<ClientVerdict>> = adversaries
            .par_iter()
            .map(|&unreliable| decode_all(inst, schedule.p_divisor(), &field, &transmissions, unreliable))
            .collect();
        attempts += 1;
        for (count, v) in failed_attempts.iter_mut().zip(&verdicts) {
            if v.iter().any(|c| !c.decoded) {
                *count += 1;
            }
        }
        let done = verdicts.iter().flatten().all(|c| c.decoded);
        last = verdicts;
        if done {
            break;
        }
    }
    let sets: Vec<AdversaryVerdict> = adversaries
        .into_iter()
        .zip(last)
        .zip(failed_attempts)
        .map(|((unreliable, clients), failed_attempts)| AdversaryVerdict {
            unreliable,
            clients,
            failed_attempts,
        })
        .collect();
    Ok(SimulationReport {
        field_bits,
        seed,
        p_divisor: schedule.p_divisor(),
        max_retries,
        attempts,
        persistent_failure: sets.iter().any(|s| !s.success()),
        sets,
    })
}

fn decode_all(
    inst: &Instance,
    p: usize,
    field: &Field,
    transmissions: &[TransmissionRecord],
    unreliable: ClientSet,
) -> Vec<ClientVerdict> {
    let survivors = unreliable.complement(inst.n_clients());
    let mut available = crate::instance::PacketSet::empty(inst.n_packets());
    for c in survivors.iter() {
        available = available.union(&inst.sets()[c - 1]);
    }
    survivors
        .iter()
        .map(|client| {
            let wanted = available.difference(&inst.sets()[client - 1]);
            let columns: Vec<usize> = wanted.iter().flat_map(|packet| packet * p..(packet + 1) * p).collect();
            let mut elim = Eliminator::new(field, columns.len());
            for t in transmissions {
                if elim.is_full() {
                    break;
                }
                if t.sender == client || unreliable.contains(t.sender) {
                    continue;
                }
                let row: Vec<u16> = columns.iter().map(|&col| t.coefficients[col]).collect();
                elim.insert(row);
            }
            ClientVerdict {
                client,
                decoded: elim.is_full(),
                required_chunks: columns.len(),
                missing_chunks: columns.len() - elim.rank(),
            }
        })
        .collect()
}

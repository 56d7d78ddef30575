use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("client index {index} out of range 1..={n_clients}")]
    ClientIndex { index: usize, n_clients: usize },

    #[error("packet index {packet} out of range for {n_packets} packets (client {client})")]
    PacketIndex {
        client: usize,
        packet: usize,
        n_packets: usize,
    },

    #[error("uncovered packet {0}: no client holds it")]
    UncoveredPacket(usize),

    #[error("degenerate instance: N = {n_clients} clients with M = {n_unreliable} unreliable needs N >= M + 2")]
    Degenerate {
        n_clients: usize,
        n_unreliable: usize,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("closed form out of regime: client {client} would transmit {value}")]
    OutOfRegime { client: usize, value: String },

    #[error("schedule value {value} of client {client} is not a nonnegative multiple of 1/{p_divisor}")]
    OffGrid {
        client: usize,
        value: String,
        p_divisor: usize,
    },

    #[error("witness subset {subset:?} is not a constraint of the LP")]
    WitnessMismatch { subset: Vec<usize> },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// True for errors caused by the caller's data rather than by a failed check.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::ClientIndex { .. }
                | Error::PacketIndex { .. }
                | Error::UncoveredPacket(_)
                | Error::Degenerate { .. }
                | Error::Capacity(_)
                | Error::OffGrid { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

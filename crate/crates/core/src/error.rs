use std::path::PathBuf;

use crate::types::{Round, WorkerId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("merkle tree is empty")]
    EmptyTree,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-consecutive round: expected {expected}, got {got}")]
    NonConsecutiveRound { expected: Round, got: Round },
    #[error("window {start}..={end} outside history of {history} records")]
    WindowOutOfRange { start: Round, end: Round, history: usize },

    #[error("invalid signature from {0}")]
    BadSignature(String),
    #[error("duplicate root submission for worker {worker} at round {round}")]
    DuplicateRoot { worker: WorkerId, round: Round },
    #[error("quorum unreachable: {got} of {needed} required signatures")]
    QuorumUnreachable { got: usize, needed: usize },
    #[error("chain invalid at height {height}: {reason}")]
    InvalidChain { height: u64, reason: String },
    #[error("unknown block height {0}")]
    UnknownHeight(u64),
    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite values in model parameters")]
    NonFinite,
    #[error("no valid updates to aggregate")]
    NoUpdates,
    #[error("empty data shard")]
    EmptyShard,

    #[error("all behavior scores are infinite at round {0}")]
    NoReliableWorkers(Round),

    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyTree => "empty_tree",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NonConsecutiveRound { .. } => "non_consecutive_round",
            Error::WindowOutOfRange { .. } => "window_out_of_range",
            Error::BadSignature(_) => "bad_signature",
            Error::DuplicateRoot { .. } => "duplicate_root",
            Error::QuorumUnreachable { .. } => "quorum_unreachable",
            Error::InvalidChain { .. } => "invalid_chain",
            Error::UnknownHeight(_) => "unknown_height",
            Error::Decode(_) => "decode",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite => "non_finite",
            Error::NoUpdates => "no_updates",
            Error::EmptyShard => "empty_shard",
            Error::NoReliableWorkers(_) => "no_reliable_workers",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
        }
    }
}

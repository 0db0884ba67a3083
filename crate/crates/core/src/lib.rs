//! Blockchain-backed federated learning with Merkle-committed updates,
//! off-critical-path auditing of workers, and a discrete-event simulator.

pub mod attack;
pub mod config;
pub mod crypto;
pub mod error;
pub mod fl;
pub mod ledger;
pub mod merkle;
pub mod monitor;
pub mod oracle;
pub mod plot;
pub mod seed;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use types::{Digest, MinerId, MinerRole, ModelParams, NodeId, Round, WorkerId};

//! Per-operation delay model.
//!
//! Every delay is `base + U(-jitter, +jitter)` milliseconds, drawn from a
//! stream keyed by `(seed, class, round, node, leg)`. Two runs with the same
//! seed therefore see the same delay for the same operation even when the
//! operations happen in a different order, which is what lets coupled and
//! decoupled runs be compared round by round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{self, label};
use crate::types::Round;

const MIN_DELAY_MS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delay {
    pub base_ms: f64,
    pub jitter_ms: f64,
}

impl Delay {
    pub const fn new(base_ms: f64, jitter_ms: f64) -> Self {
        Self { base_ms, jitter_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DelayClass {
    WorkerMiner = 0,
    MinerMiner = 1,
    Consensus = 2,
    Train = 3,
    Verify = 4,
}

/// Which message or computation of a node within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Download = 0,
    UploadFl = 1,
    UploadMon = 2,
    AuditRequest = 3,
    AuditResponse = 4,
    Exchange = 5,
    Publish = 6,
    Compute = 7,
    RootCheck = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub worker_miner: Delay,
    pub miner_miner: Delay,
    pub consensus: Delay,
    pub train: Delay,
    /// Per Merkle proof or signature checked.
    pub verify: Delay,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            worker_miner: Delay::new(20.0, 5.0),
            miner_miner: Delay::new(10.0, 3.0),
            consensus: Delay::new(50.0, 10.0),
            train: Delay::new(30.0, 0.0),
            verify: Delay::new(2.0, 0.0),
        }
    }
}

impl LatencyModel {
    fn delay(&self, class: DelayClass) -> Delay {
        match class {
            DelayClass::WorkerMiner => self.worker_miner,
            DelayClass::MinerMiner => self.miner_miner,
            DelayClass::Consensus => self.consensus,
            DelayClass::Train => self.train,
            DelayClass::Verify => self.verify,
        }
    }

    /// Strictly positive delay in milliseconds.
    pub fn sample(&self, seed: u64, class: DelayClass, round: Round, node: u32, leg: Leg) -> f64 {
        let d = self.delay(class);
        let jitter = if d.jitter_ms > 0.0 {
            let mut rng = seed::stream(seed, &[label::LATENCY, class as u64, round, node as u64, leg as u64]);
            rng.gen_range(-d.jitter_ms..=d.jitter_ms)
        } else {
            0.0
        };
        (d.base_ms + jitter).max(MIN_DELAY_MS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_positive_bounded_and_reproducible() {
        let m = LatencyModel::default();
        for r in 0..200 {
            let a = m.sample(1, DelayClass::WorkerMiner, r, 3, Leg::Download);
            assert!((15.0..=25.0).contains(&a));
            assert_eq!(a, m.sample(1, DelayClass::WorkerMiner, r, 3, Leg::Download));
            let c = m.sample(1, DelayClass::Consensus, r, 0, Leg::Compute);
            assert!((40.0..=60.0).contains(&c));
        }
        assert_eq!(m.sample(9, DelayClass::Train, 4, 1, Leg::Compute), 30.0);
        assert_ne!(
            m.sample(1, DelayClass::WorkerMiner, 0, 0, Leg::Download),
            m.sample(1, DelayClass::WorkerMiner, 0, 0, Leg::UploadFl)
        );
    }

    #[test]
    fn degenerate_delays_stay_positive() {
        let m = LatencyModel {
            worker_miner: Delay::new(0.0, 0.0),
            miner_miner: Delay::new(1.0, 5.0),
            ..LatencyModel::default()
        };
        for r in 0..100 {
            assert!(m.sample(2, DelayClass::WorkerMiner, r, 0, Leg::Download) > 0.0);
            assert!(m.sample(2, DelayClass::MinerMiner, r, 0, Leg::Exchange) > 0.0);
        }
    }
}

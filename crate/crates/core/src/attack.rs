//! Untargeted model poisoning by compromised workers.
//!
//! An attacker keeps its own valid key and a consistent Merkle history; it
//! simply submits fabricated weights. Detection therefore has to come from
//! update content, never from signatures.

use std::collections::BTreeSet;

use rand::Rng;

use crate::seed::{self, label};
use crate::types::{ModelParams, Round, WorkerId};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub attackers: BTreeSet<WorkerId>,
    /// Poisoning applies to rounds strictly greater than this.
    pub start_round: Round,
    /// Entries are drawn uniformly from `[-magnitude, magnitude]`.
    pub magnitude: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            attackers: BTreeSet::new(),
            start_round: 30,
            magnitude: 10.0,
        }
    }
}

impl AttackConfig {
    pub fn is_active(&self, worker: WorkerId, round: Round) -> bool {
        self.attackers.contains(&worker) && round > self.start_round
    }
}

/// Replace an attacker's honest update with i.i.d. uniform noise drawn from
/// the attacker's own stream for this round. Everyone else passes through.
pub fn maybe_poison(
    worker: WorkerId,
    round: Round,
    honest: ModelParams,
    cfg: &AttackConfig,
    run_seed: u64,
) -> ModelParams {
    if !cfg.is_active(worker, round) {
        return honest;
    }
    let mut rng = seed::stream(run_seed, &[label::ATTACK, worker.0 as u64, round]);
    poison_with(honest.dim(), cfg.magnitude, &mut rng)
}

pub fn poison_with<R: Rng + ?Sized>(dim: usize, magnitude: f64, rng: &mut R) -> ModelParams {
    ModelParams::new((0..dim).map(|_| rng.gen_range(-magnitude..=magnitude)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AttackConfig {
        AttackConfig {
            attackers: [WorkerId(9)].into_iter().collect(),
            ..AttackConfig::default()
        }
    }

    #[test]
    fn honest_worker_is_untouched() {
        let lm = ModelParams::new(vec![0.1, 0.2, 0.3, 0.4]);
        for r in [0, 30, 31, 200] {
            assert_eq!(maybe_poison(WorkerId(0), r, lm.clone(), &cfg(), 1), lm);
        }
    }

    #[test]
    fn attacker_output_is_bounded_and_independent_of_honest_input() {
        let a = maybe_poison(WorkerId(9), 31, ModelParams::new(vec![0.0; 4]), &cfg(), 1);
        let b = maybe_poison(WorkerId(9), 31, ModelParams::new(vec![5.0, -3.0, 1.0, 2.0]), &cfg(), 1);
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|w| (-10.0..=10.0).contains(w)));
        let c = maybe_poison(WorkerId(9), 32, ModelParams::new(vec![0.0; 4]), &cfg(), 1);
        assert_ne!(a, c);
    }

    #[test]
    fn round_thirty_itself_is_clean() {
        let lm = ModelParams::new(vec![0.1; 4]);
        assert_eq!(maybe_poison(WorkerId(9), 30, lm.clone(), &cfg(), 1), lm);
        assert_ne!(maybe_poison(WorkerId(9), 31, lm.clone(), &cfg(), 1), lm);
    }

    #[test]
    fn noise_covers_the_range() {
        let mut rng = seed::stream(3, &[99]);
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for _ in 0..2000 {
            for w in poison_with(4, 10.0, &mut rng).weights {
                lo = lo.min(w);
                hi = hi.max(w);
            }
        }
        assert!(lo < -9.5 && hi > 9.5);
    }
}

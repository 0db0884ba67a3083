//! Deterministic discrete-event simulation of the four experiment scenarios.

mod engine;
pub mod event;
pub mod latency;
pub mod metrics;
pub mod sweep;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::error::Error;
use crate::fl::{DatasetConfig, TrainConfig};
use crate::monitor::MonitorConfig;
use crate::types::{Round, WorkerId};

pub use engine::{run_scenario, RunOutput};
pub use event::{EventKind, EventQueue, SimEvent};
pub use latency::{Delay, DelayClass, LatencyModel, Leg};
pub use metrics::{PhaseMetrics, RoundMetrics, RunSummary};
pub use sweep::{attacker_sweep, scaling_sweep, AttackerPoint, ScalingPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    NoAttack,
    Attack,
    DefenseCoupled,
    DefenseDecoupled,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::NoAttack,
        Scenario::Attack,
        Scenario::DefenseCoupled,
        Scenario::DefenseDecoupled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NoAttack => "no-attack",
            Scenario::Attack => "attack",
            Scenario::DefenseCoupled => "defense-coupled",
            Scenario::DefenseDecoupled => "defense-decoupled",
        }
    }

    pub fn has_attackers(self) -> bool {
        self != Scenario::NoAttack
    }

    pub fn has_monitor(self) -> bool {
        matches!(self, Scenario::DefenseCoupled | Scenario::DefenseDecoupled)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Scenario::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub scenario: Scenario,
    pub workers: u32,
    pub miners_fl: u32,
    pub miners_mon: u32,
    /// Attackers are workers `0..attackers`.
    pub attackers: u32,
    pub attack_start: Round,
    pub attack_magnitude: f64,
    pub monitor: MonitorConfig,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub latency: LatencyModel,
    /// Round budget.
    pub rounds: u64,
    /// Convergence threshold as a multiple of the centralized plateau loss.
    pub epsilon_factor: f64,
    /// Consecutive rounds at or below the threshold that count as converged.
    pub sustain: usize,
    pub stop_at_convergence: bool,
    /// Probability that a worker ignores an audit request.
    pub drop_rate: f64,
    pub on_chain_model: bool,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: Scenario::DefenseDecoupled,
            workers: 10,
            miners_fl: 2,
            miners_mon: 2,
            attackers: 1,
            attack_start: 30,
            attack_magnitude: 10.0,
            monitor: MonitorConfig::default(),
            train: TrainConfig::default(),
            dataset: DatasetConfig::default(),
            latency: LatencyModel::default(),
            rounds: 300,
            epsilon_factor: 1.05,
            sustain: 5,
            stop_at_convergence: true,
            drop_rate: 0.0,
            on_chain_model: false,
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn miners(&self) -> u32 {
        self.miners_fl + self.miners_mon
    }

    pub fn attack_config(&self) -> AttackConfig {
        let attackers: BTreeSet<WorkerId> = if self.scenario.has_attackers() {
            (0..self.attackers).map(WorkerId).collect()
        } else {
            BTreeSet::new()
        };
        AttackConfig {
            attackers,
            start_round: self.attack_start,
            magnitude: self.attack_magnitude,
        }
    }

    /// Check the cross-field constraints; the message names the one broken.
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.workers < 2 {
            return fail("workers >= 2");
        }
        if self.attackers >= self.workers {
            return fail("attackers < workers");
        }
        if self.miners_fl == 0 || self.miners_mon == 0 {
            return fail("miners_fl >= 1 and miners_mon >= 1");
        }
        if self.dataset.rows < self.workers as usize {
            return fail("rows >= workers");
        }
        if self.monitor.window == 0 {
            return fail("window >= 1");
        }
        if self.monitor.cadence == 0 || self.monitor.cadence > self.monitor.max_lag + 1 {
            return fail("1 <= cadence <= max_lag + 1");
        }
        if !(self.monitor.tau > 0.0) {
            return fail("tau > 0");
        }
        if !(self.train.learning_rate > 0.0) {
            return fail("learning_rate > 0");
        }
        if self.train.batch_size == Some(0) {
            return fail("batch_size >= 1");
        }
        if !(self.epsilon_factor >= 1.0) {
            return fail("epsilon_factor >= 1");
        }
        if self.sustain == 0 {
            return fail("sustain >= 1");
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return fail("0 <= drop_rate <= 1");
        }
        if !(self.attack_magnitude > 0.0) {
            return fail("attack_magnitude > 0");
        }
        if self.rounds == 0 {
            return fail("rounds >= 1");
        }
        Ok(())
    }
}

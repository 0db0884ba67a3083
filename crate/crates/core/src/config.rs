//! Run configuration: flat `key = value` files plus command-line overrides.
//!
//! ```text
//! # comments and blank lines are ignored
//! mode = defense-decoupled
//! workers = 10
//! lookback = all
//! ```
//!
//! Values are applied defaults first, then the file, then flags, so later
//! sources win. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::{Scenario, SimConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BCFL_OUT_DIR";

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "run seed"),
    ("mode", "no-attack | attack | defense-coupled | defense-decoupled"),
    ("workers", "number of workers"),
    ("miners", "total miners (split between FL and monitoring)"),
    ("miners_fl", "miners aggregating and running consensus"),
    ("miners_mon", "miners auditing workers"),
    ("attackers", "number of attacking workers (ids 0..attackers)"),
    ("attack_start", "attack begins strictly after this round"),
    ("attack_magnitude", "poisoned weights are uniform in [-m, m]"),
    ("window", "audit window size z"),
    ("tau", "score threshold for the reliable set"),
    ("max_lag", "maximum reliable-set staleness L in rounds"),
    ("cadence", "audit every this many rounds"),
    ("lookback", "window start range below the newest start, or `all`"),
    ("sticky", "keep excluding a worker once it scored above tau"),
    ("drop_rate", "probability a worker ignores an audit request"),
    ("epochs", "local epochs per round"),
    ("learning_rate", "local learning rate"),
    ("batch_size", "local mini-batch size, or `full` for the whole shard"),
    ("epsilon_factor", "convergence threshold as a multiple of the centralized plateau loss"),
    ("sustain", "consecutive rounds below threshold that count as converged"),
    ("rows", "dataset rows"),
    ("signal", "norm of the ground-truth coefficients of the synthetic dataset"),
    ("rounds", "round budget"),
    ("stop_at_convergence", "end the run once converged"),
    ("on_chain_model", "embed model weights in blocks"),
    ("trace", "dump every event to trace.jsonl"),
    ("out_dir", "output directory"),
    ("worker_miner_ms", "worker-miner link base delay"),
    ("worker_miner_jitter_ms", "worker-miner link jitter"),
    ("miner_miner_ms", "miner-miner link base delay"),
    ("miner_miner_jitter_ms", "miner-miner link jitter"),
    ("consensus_ms", "consensus base delay"),
    ("consensus_jitter_ms", "consensus jitter"),
    ("train_ms", "local training time"),
    ("train_jitter_ms", "local training jitter"),
    ("verify_ms", "time to check one proof or signature"),
    ("verify_jitter_ms", "proof check jitter"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let out_dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
        Self {
            sim: SimConfig::default(),
            out_dir,
        }
    }
}

#[derive(Default)]
struct MinerSplit {
    total: Option<u32>,
    fl: Option<u32>,
    mon: Option<u32>,
}

/// Split `text` into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then `file` (if any), then `overrides`.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut pairs = Vec::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        pairs = parse_pairs(&text)?;
    }
    pairs.extend(overrides.iter().cloned());
    from_pairs(&pairs)
}

pub fn from_pairs(pairs: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut split = MinerSplit::default();
    for (k, v) in pairs {
        apply(&mut cfg, &mut split, k, v)?;
    }
    resolve_miners(&mut cfg.sim, &split)?;
    cfg.sim.validate()?;
    Ok(cfg)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

fn apply(cfg: &mut RunConfig, split: &mut MinerSplit, key: &str, v: &str) -> Result<()> {
    let s = &mut cfg.sim;
    match key {
        "seed" => s.seed = num(key, v)?,
        "mode" => s.scenario = v.parse::<Scenario>()?,
        "workers" => s.workers = num(key, v)?,
        "miners" => split.total = Some(num(key, v)?),
        "miners_fl" => split.fl = Some(num(key, v)?),
        "miners_mon" => split.mon = Some(num(key, v)?),
        "attackers" => s.attackers = num(key, v)?,
        "attack_start" => s.attack_start = num(key, v)?,
        "attack_magnitude" => s.attack_magnitude = num(key, v)?,
        "window" => s.monitor.window = num(key, v)?,
        "tau" => s.monitor.tau = num(key, v)?,
        "max_lag" => s.monitor.max_lag = num(key, v)?,
        "cadence" => s.monitor.cadence = num(key, v)?,
        "lookback" => s.monitor.lookback = if v == "all" { None } else { Some(num(key, v)?) },
        "sticky" => s.monitor.sticky = flag(key, v)?,
        "drop_rate" => s.drop_rate = num(key, v)?,
        "epochs" => s.train.epochs = num(key, v)?,
        "learning_rate" => s.train.learning_rate = num(key, v)?,
        "batch_size" => s.train.batch_size = if v == "full" { None } else { Some(num(key, v)?) },
        "epsilon_factor" => s.epsilon_factor = num(key, v)?,
        "sustain" => s.sustain = num(key, v)?,
        "rows" => s.dataset.rows = num(key, v)?,
        "signal" => s.dataset.signal = num(key, v)?,
        "rounds" => s.rounds = num(key, v)?,
        "stop_at_convergence" => s.stop_at_convergence = flag(key, v)?,
        "on_chain_model" => s.on_chain_model = flag(key, v)?,
        "trace" => s.trace = flag(key, v)?,
        "out_dir" => cfg.out_dir = PathBuf::from(v),
        "worker_miner_ms" => s.latency.worker_miner.base_ms = num(key, v)?,
        "worker_miner_jitter_ms" => s.latency.worker_miner.jitter_ms = num(key, v)?,
        "miner_miner_ms" => s.latency.miner_miner.base_ms = num(key, v)?,
        "miner_miner_jitter_ms" => s.latency.miner_miner.jitter_ms = num(key, v)?,
        "consensus_ms" => s.latency.consensus.base_ms = num(key, v)?,
        "consensus_jitter_ms" => s.latency.consensus.jitter_ms = num(key, v)?,
        "train_ms" => s.latency.train.base_ms = num(key, v)?,
        "train_jitter_ms" => s.latency.train.jitter_ms = num(key, v)?,
        "verify_ms" => s.latency.verify.base_ms = num(key, v)?,
        "verify_jitter_ms" => s.latency.verify.jitter_ms = num(key, v)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn resolve_miners(s: &mut SimConfig, split: &MinerSplit) -> Result<()> {
    let (fl, mon) = match (split.total, split.fl, split.mon) {
        (None, None, None) => return Ok(()),
        (Some(t), None, None) => (t - t / 2, t / 2),
        (Some(t), Some(f), None) => (f, t.checked_sub(f).ok_or_else(sum_err)?),
        (Some(t), None, Some(m)) => (t.checked_sub(m).ok_or_else(sum_err)?, m),
        (Some(t), Some(f), Some(m)) if f + m == t => (f, m),
        (Some(_), Some(_), Some(_)) => return Err(sum_err()),
        (None, f, m) => (f.unwrap_or(s.miners_fl), m.unwrap_or(s.miners_mon)),
    };
    s.miners_fl = fl;
    s.miners_mon = mon;
    Ok(())
}

fn sum_err() -> Error {
    Error::Config("miners_fl + miners_mon = miners".into())
}

impl RunConfig {
    /// The effective configuration in file syntax; parsing it back yields
    /// the same config.
    pub fn to_file_string(&self) -> String {
        let s = &self.sim;
        let l = &s.latency;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", s.seed.to_string());
        put("mode", s.scenario.to_string());
        put("workers", s.workers.to_string());
        put("miners", s.miners().to_string());
        put("miners_fl", s.miners_fl.to_string());
        put("miners_mon", s.miners_mon.to_string());
        put("attackers", s.attackers.to_string());
        put("attack_start", s.attack_start.to_string());
        put("attack_magnitude", s.attack_magnitude.to_string());
        put("window", s.monitor.window.to_string());
        put("tau", s.monitor.tau.to_string());
        put("max_lag", s.monitor.max_lag.to_string());
        put("cadence", s.monitor.cadence.to_string());
        put("lookback", s.monitor.lookback.map_or("all".into(), |v| v.to_string()));
        put("sticky", s.monitor.sticky.to_string());
        put("drop_rate", s.drop_rate.to_string());
        put("epochs", s.train.epochs.to_string());
        put("learning_rate", s.train.learning_rate.to_string());
        put("batch_size", s.train.batch_size.map_or("full".into(), |v| v.to_string()));
        put("epsilon_factor", s.epsilon_factor.to_string());
        put("sustain", s.sustain.to_string());
        put("rows", s.dataset.rows.to_string());
        put("signal", s.dataset.signal.to_string());
        put("rounds", s.rounds.to_string());
        put("stop_at_convergence", s.stop_at_convergence.to_string());
        put("on_chain_model", s.on_chain_model.to_string());
        put("trace", s.trace.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("worker_miner_ms", l.worker_miner.base_ms.to_string());
        put("worker_miner_jitter_ms", l.worker_miner.jitter_ms.to_string());
        put("miner_miner_ms", l.miner_miner.base_ms.to_string());
        put("miner_miner_jitter_ms", l.miner_miner.jitter_ms.to_string());
        put("consensus_ms", l.consensus.base_ms.to_string());
        put("consensus_jitter_ms", l.consensus.jitter_ms.to_string());
        put("train_ms", l.train.base_ms.to_string());
        put("train_jitter_ms", l.train.jitter_ms.to_string());
        put("verify_ms", l.verify.base_ms.to_string());
        put("verify_jitter_ms", l.verify.jitter_ms.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn seed_alone_gives_defaults() {
        let c = from_pairs(&kv(&[("seed", "42")])).unwrap();
        let expected = SimConfig {
            seed: 42,
            ..SimConfig::default()
        };
        assert_eq!(c.sim, expected);
        assert_eq!(c.sim.workers, 10);
        assert_eq!(c.sim.miners(), 4);
        assert_eq!(c.sim.dataset.rows, 246);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# preset\nworkers = 6\nseed=3 # trailing\n\n").unwrap();
        let c = parse_config(Some(&p), &kv(&[("workers", "9")])).unwrap();
        assert_eq!(c.sim.workers, 9);
        assert_eq!(c.sim.seed, 3);
    }

    #[test]
    fn constraint_errors_name_the_constraint() {
        let e = from_pairs(&kv(&[("attackers", "5"), ("workers", "5")])).unwrap_err();
        assert!(e.to_string().contains("attackers < workers"), "{e}");
        let e = from_pairs(&kv(&[("miners", "4"), ("miners_fl", "3"), ("miners_mon", "2")])).unwrap_err();
        assert!(e.to_string().contains("miners_fl + miners_mon = miners"), "{e}");
        let e = from_pairs(&kv(&[("cadence", "9")])).unwrap_err();
        assert!(e.to_string().contains("cadence"), "{e}");
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(from_pairs(&kv(&[("wrokers", "3")])).unwrap_err().to_string().contains("wrokers"));
        assert!(from_pairs(&kv(&[("workers", "many")])).is_err());
        assert!(from_pairs(&kv(&[("mode", "chaos")])).is_err());
        assert!(parse_pairs("workers 3").is_err());
    }

    #[test]
    fn miner_split_rules() {
        let c = from_pairs(&kv(&[("miners", "5")])).unwrap();
        assert_eq!((c.sim.miners_fl, c.sim.miners_mon), (3, 2));
        let c = from_pairs(&kv(&[("miners", "6"), ("miners_mon", "1")])).unwrap();
        assert_eq!((c.sim.miners_fl, c.sim.miners_mon), (5, 1));
        let c = from_pairs(&kv(&[("miners_fl", "3")])).unwrap();
        assert_eq!(c.sim.miners(), 5);
    }

    #[test]
    fn file_dump_roundtrips() {
        let c = from_pairs(&kv(&[("seed", "7"), ("lookback", "3"), ("mode", "attack"), ("tau", "2.5")])).unwrap();
        let again = from_pairs(&parse_pairs(&c.to_file_string()).unwrap()).unwrap();
        assert_eq!(again, c);
        let every: Vec<&str> = parse_pairs(&c.to_file_string())
            .unwrap()
            .iter()
            .map(|(k, _)| KEYS.iter().find(|(n, _)| n == k).expect("documented").0)
            .collect();
        assert_eq!(every.len(), KEYS.len());
    }
}

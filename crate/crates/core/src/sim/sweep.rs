//! Multi-run experiments. Runs execute in parallel; results come back in
//! configuration order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_scenario, RunOutput, Scenario, SimConfig};
use crate::error::{Error, Result};

/// Run every config, in parallel, returning outputs in input order.
pub fn run_all(configs: &[SimConfig]) -> Result<Vec<RunOutput>> {
    configs.par_iter().map(run_scenario).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub workers: u32,
    pub seed: u64,
    /// Mean per-round monitoring busy time.
    pub mon_busy_mean_ms: f64,
    /// Mean per-round end-to-end FL delay.
    pub fl_delay_mean_ms: f64,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerPoint {
    pub attackers: u32,
    pub mode: Scenario,
    pub seed: u64,
    pub convergence_round: Option<u64>,
    pub convergence_time_ms: Option<f64>,
}

pub fn seeds_from(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

/// Grid of `base` over `worker_counts x seeds`, ordered by count then seed.
pub fn scaling_configs(base: &SimConfig, worker_counts: &[u32], seeds: &[u64]) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for &workers in worker_counts {
        for &seed in seeds {
            out.push(SimConfig {
                workers,
                seed,
                ..base.clone()
            });
        }
    }
    out
}

pub fn scaling_point(run: &RunOutput) -> ScalingPoint {
    ScalingPoint {
        workers: run.config.workers,
        seed: run.config.seed,
        mon_busy_mean_ms: run.summary.mon_busy_mean_ms,
        fl_delay_mean_ms: run.summary.e2e_mean_ms,
        rounds: run.summary.rounds_run,
    }
}

/// Per-role delay as the network grows.
pub fn scaling_sweep(base: &SimConfig, worker_counts: &[u32], seeds: &[u64]) -> Result<Vec<ScalingPoint>> {
    let runs = run_all(&scaling_configs(base, worker_counts, seeds))?;
    Ok(runs.iter().map(scaling_point).collect())
}

/// Grid of `base` over `attacker_counts x seeds`, ordered by count then seed.
pub fn attacker_configs(base: &SimConfig, attacker_counts: &[u32], seeds: &[u64]) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for &attackers in attacker_counts {
        for &seed in seeds {
            out.push(SimConfig {
                attackers,
                seed,
                ..base.clone()
            });
        }
    }
    out
}

pub fn attacker_point(run: &RunOutput) -> AttackerPoint {
    AttackerPoint {
        attackers: run.config.attackers,
        mode: run.config.scenario,
        seed: run.config.seed,
        convergence_round: run.summary.convergence_round,
        convergence_time_ms: run.summary.convergence_time_ms,
    }
}

/// Convergence time as the number of attackers grows.
pub fn attacker_sweep(base: &SimConfig, attacker_counts: &[u32], seeds: &[u64]) -> Result<Vec<AttackerPoint>> {
    let runs = run_all(&attacker_configs(base, attacker_counts, seeds))?;
    Ok(runs.iter().map(attacker_point).collect())
}

pub const SCALING_HEADER: &str = "workers,seed,mon_busy_mean_ms,fl_delay_mean_ms,rounds";
pub const ATTACKERS_HEADER: &str = "attackers,mode,seed,convergence_round,convergence_time_ms";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.workers, p.seed, p.mon_busy_mean_ms, p.fl_delay_mean_ms, p.rounds
        ));
    }
    out
}

pub fn attackers_csv(points: &[AttackerPoint]) -> String {
    let mut out = format!("{ATTACKERS_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.attackers,
            p.mode,
            p.seed,
            opt(p.convergence_round),
            opt(p.convergence_time_ms)
        ));
    }
    out
}

fn rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Parse(format!("{}: expected header `{header}`", path.display())));
    }
    Ok(lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect())
}

fn col<T: std::str::FromStr>(c: &[&str], i: usize, path: &Path) -> Result<T> {
    c.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("{}: bad column {i} in `{}`", path.display(), c.join(","))))
}

fn opt_col<T: std::str::FromStr>(c: &[&str], i: usize, path: &Path) -> Result<Option<T>> {
    match c.get(i) {
        Some(&"") => Ok(None),
        _ => col(c, i, path).map(Some),
    }
}

pub fn read_scaling_csv(path: &Path) -> Result<Vec<ScalingPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rows(&text, SCALING_HEADER, path)?
        .iter()
        .map(|c| {
            Ok(ScalingPoint {
                workers: col(c, 0, path)?,
                seed: col(c, 1, path)?,
                mon_busy_mean_ms: col(c, 2, path)?,
                fl_delay_mean_ms: col(c, 3, path)?,
                rounds: col(c, 4, path)?,
            })
        })
        .collect()
}

pub fn read_attackers_csv(path: &Path) -> Result<Vec<AttackerPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rows(&text, ATTACKERS_HEADER, path)?
        .iter()
        .map(|c| {
            Ok(AttackerPoint {
                attackers: col(c, 0, path)?,
                mode: col(c, 1, path)?,
                seed: col(c, 2, path)?,
                convergence_round: opt_col(c, 3, path)?,
                convergence_time_ms: opt_col(c, 4, path)?,
            })
        })
        .collect()
}

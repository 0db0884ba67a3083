//! Per-round metrics, per-phase busy times, and the run summary, with their
//! CSV/JSON encodings.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Round;

pub const METRICS_HEADER: &str = "round,sim_time_ms,e2e_delay_ms,loss,accuracy,reliable_set_size,protected";
pub const PHASES_HEADER: &str = "round,fl_busy_ms,mon_busy_ms,sync_wait_ms";

/// One completed FL round. `loss` and `accuracy` are those of the global
/// model the round produced, `sim_time_ms` is when that model was committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: Round,
    pub sim_time_ms: f64,
    pub e2e_delay_ms: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub reliable_set_size: usize,
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub round: Round,
    /// Training, upload, exchange and consensus: the FL path without waits.
    pub fl_busy_ms: f64,
    /// Root checks, audit round trips and proof checks for this round.
    pub mon_busy_ms: f64,
    /// Time aggregation sat idle waiting on the monitoring track.
    pub sync_wait_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub workers: u32,
    pub attackers: u32,
    pub rounds_run: u64,
    pub plateau_loss: f64,
    pub epsilon: f64,
    pub convergence_round: Option<Round>,
    pub convergence_time_ms: Option<f64>,
    /// Round of the first reliable-set publication.
    pub t_x_round: Option<Round>,
    pub fl_busy_total_ms: f64,
    pub mon_busy_total_ms: f64,
    pub fl_busy_mean_ms: f64,
    pub mon_busy_mean_ms: f64,
    pub e2e_mean_ms: f64,
    pub sync_wait_total_ms: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub caught: Vec<u32>,
    pub chain_height: u64,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_metrics_csv(rows: &[RoundMetrics], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round, r.sim_time_ms, r.e2e_delay_ms, r.loss, r.accuracy, r.reliable_set_size, r.protected
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_phases_csv(rows: &[PhaseMetrics], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    let mut out = String::from(PHASES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.round, r.fl_busy_ms, r.mon_busy_ms, r.sync_wait_ms
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_summary_json(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(summary).expect("serializable");
    writeln!(f, "{text}").map_err(|e| Error::io(path, e))
}

pub fn read_summary_json(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn csv_body<'a>(text: &'a str, header: &str, path: &Path) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Parse(format!("{}: expected header `{header}`", path.display())));
    }
    Ok(lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect())
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, path: &Path) -> Result<T> {
    cols.get(i)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Parse(format!("{}: bad column {i} in `{}`", path.display(), cols.join(","))))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    csv_body(&text, METRICS_HEADER, path)?
        .into_iter()
        .map(|c| {
            Ok(RoundMetrics {
                round: field(&c, 0, path)?,
                sim_time_ms: field(&c, 1, path)?,
                e2e_delay_ms: field(&c, 2, path)?,
                loss: field(&c, 3, path)?,
                accuracy: field(&c, 4, path)?,
                reliable_set_size: field(&c, 5, path)?,
                protected: field(&c, 6, path)?,
            })
        })
        .collect()
}

pub fn read_phases_csv(path: &Path) -> Result<Vec<PhaseMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    csv_body(&text, PHASES_HEADER, path)?
        .into_iter()
        .map(|c| {
            Ok(PhaseMetrics {
                round: field(&c, 0, path)?,
                fl_busy_ms: field(&c, 1, path)?,
                mon_busy_ms: field(&c, 2, path)?,
                sync_wait_ms: field(&c, 3, path)?,
            })
        })
        .collect()
}

/// First round of the first run of `sustain` consecutive losses at or below
/// `epsilon`.
pub fn convergence_round(losses: &[f64], epsilon: f64, sustain: usize) -> Option<usize> {
    let mut streak = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l <= epsilon {
            streak += 1;
            if streak == sustain {
                return Some(i + 1 - sustain);
            }
        } else {
            streak = 0;
        }
    }
    None
}

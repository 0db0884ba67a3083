//! Independent reference computations used to check the pipeline.
//!
//! Nothing here calls into the training, aggregation, or scoring code. Inputs
//! are plain numbers or the on-disk formats (dataset CSV, audit JSONL,
//! model JSONL), parsed locally.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One observation: three features and a 0/1 target.
pub type Obs = ([f64; 3], f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub plateau_loss: f64,
    pub accuracy: f64,
    pub weights: [f64; 4],
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    /// Global model after each round (index r holds the model produced by
    /// round r).
    pub models: Vec<[f64; 4]>,
    pub losses: Vec<f64>,
    pub convergence_round: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub plateau_loss: f64,
    pub reference_convergence_round: Option<u64>,
    pub scores: Vec<RecomputedScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecomputedScore {
    pub audit_round: u64,
    pub worker: u32,
    pub score: Option<f64>,
}

fn z(w: &[f64; 4], x: &[f64; 3]) -> f64 {
    w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3]
}

fn p(zv: f64) -> f64 {
    if zv >= 0.0 {
        1.0 / (1.0 + (-zv).exp())
    } else {
        let e = zv.exp();
        e / (1.0 + e)
    }
}

fn nll(w: &[f64; 4], data: &[Obs]) -> f64 {
    let mut total = 0.0;
    for (x, y) in data {
        let zv = z(w, x);
        let sp = if zv > 0.0 { zv + (-zv).exp().ln_1p() } else { zv.exp().ln_1p() };
        total += sp - y * zv;
    }
    total / data.len() as f64
}

fn batch_step(w: &mut [f64; 4], batch: &[Obs], lr: f64) {
    let mut g = [0.0; 4];
    for (x, y) in batch {
        let e = p(z(w, x)) - y;
        g[0] += e * x[0];
        g[1] += e * x[1];
        g[2] += e * x[2];
        g[3] += e;
    }
    let n = batch.len() as f64;
    for k in 0..4 {
        w[k] -= lr * (g[k] / n);
    }
}

/// Full-batch gradient descent from zero until the loss changes by less than
/// `1e-8` over 100 steps.
pub fn centralized_baseline(data: &[Obs]) -> Baseline {
    const LR: f64 = 1.0;
    const MAX_STEPS: usize = 2_000_000;
    let mut w = [0.0; 4];
    let mut steps = 0;
    let mut prev = nll(&w, data);
    loop {
        for _ in 0..100 {
            batch_step(&mut w, data, LR);
        }
        steps += 100;
        let cur = nll(&w, data);
        if (prev - cur).abs() < 1e-8 || steps >= MAX_STEPS {
            prev = cur;
            break;
        }
        prev = cur;
    }
    let correct = data.iter().filter(|(x, y)| (z(&w, x) >= 0.0) == (*y == 1.0)).count();
    Baseline {
        plateau_loss: prev,
        accuracy: correct as f64 / data.len() as f64,
        weights: w,
        steps,
    }
}

pub struct ReferenceParams {
    pub workers: usize,
    pub init: [f64; 4],
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub epsilon: f64,
    pub sustain: usize,
    pub budget: u64,
}

/// Straight-line FedAvg: round-robin shards, every worker trains each round,
/// size-weighted mean in worker order. Stops once the loss has stayed at or
/// below `epsilon` for `sustain` rounds.
pub fn reference_fedavg(data: &[Obs], params: &ReferenceParams) -> ReferenceRun {
    let mut shards: Vec<Vec<Obs>> = vec![Vec::new(); params.workers];
    for (i, o) in data.iter().enumerate() {
        shards[i % params.workers].push(*o);
    }
    let mut gm = params.init;
    let mut models = Vec::new();
    let mut losses = Vec::new();
    let mut streak = 0;
    let mut convergence_round = None;
    for round in 0..params.budget {
        let mut sum = [0.0; 4];
        let mut total = 0.0;
        for shard in &shards {
            let mut w = gm;
            for _ in 0..params.epochs {
                for batch in shard.chunks(params.batch) {
                    batch_step(&mut w, batch, params.lr);
                }
            }
            let n = shard.len() as f64;
            for k in 0..4 {
                sum[k] += n * w[k];
            }
            total += n;
        }
        for k in 0..4 {
            gm[k] = sum[k] / total;
        }
        let loss = nll(&gm, data);
        models.push(gm);
        losses.push(loss);
        if loss <= params.epsilon {
            streak += 1;
            if streak == params.sustain {
                convergence_round = Some(round + 1 - params.sustain as u64);
                break;
            }
        } else {
            streak = 0;
        }
    }
    ReferenceRun {
        models,
        losses,
        convergence_round,
    }
}

/// Parse the dataset CSV without going through the pipeline's reader.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<Obs>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
            let y = match c.get(3) {
                Some(&"train") => 1.0,
                Some(&"automobile") => 0.0,
                other => return Err(Error::Parse(format!("label {other:?}"))),
            };
            Ok(([num(c[0])?, num(c[1])?, num(c[2])?], y))
        })
        .collect()
}

#[derive(Deserialize)]
struct LogLine {
    audit_round: u64,
    worker: u32,
    proofs_valid: bool,
    records: Vec<LogRecord>,
}

#[derive(Deserialize)]
struct LogRecord {
    round: u64,
    local_model: Vec<f64>,
    global_model_digest: String,
}

#[derive(Deserialize)]
struct ModelLine {
    digest: String,
    weights: Vec<f64>,
}

fn mid(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Recompute every logged behavior score from the audit log and the model
/// dump. Lines are grouped by audit round; within each group the per-round
/// population median is taken over the workers with valid proofs.
pub fn recompute_scores(audit_log: &Path, models: &Path) -> Result<Vec<RecomputedScore>> {
    let model_text = std::fs::read_to_string(models).map_err(|e| Error::io(models, e))?;
    let mut gms: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for l in model_text.lines().filter(|l| !l.is_empty()) {
        let m: ModelLine = serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string()))?;
        gms.insert(m.digest, m.weights);
    }
    let log_text = std::fs::read_to_string(audit_log).map_err(|e| Error::io(audit_log, e))?;
    let mut groups: BTreeMap<u64, Vec<LogLine>> = BTreeMap::new();
    for l in log_text.lines().filter(|l| !l.is_empty()) {
        let e: LogLine = serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string()))?;
        groups.entry(e.audit_round).or_default().push(e);
    }

    let mut out = Vec::new();
    for (audit_round, lines) in groups {
        let mut dist: BTreeMap<u32, BTreeMap<u64, f64>> = BTreeMap::new();
        for e in lines.iter().filter(|e| e.proofs_valid) {
            let mut per = BTreeMap::new();
            let mut ok = true;
            for r in &e.records {
                match gms.get(&r.global_model_digest) {
                    Some(g) if g.len() == r.local_model.len() => {
                        let d = r
                            .local_model
                            .iter()
                            .zip(g)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        per.insert(r.round, d);
                    }
                    _ => ok = false,
                }
            }
            if ok {
                dist.insert(e.worker, per);
            }
        }
        let mut pop: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for per in dist.values() {
            for (r, d) in per {
                pop.entry(*r).or_default().push(*d);
            }
        }
        let meds: BTreeMap<u64, f64> = pop.into_iter().map(|(r, v)| (r, mid(v))).collect();
        for e in &lines {
            let score = dist.get(&e.worker).filter(|_| !e.records.is_empty()).and_then(|per| {
                let ratios: Option<Vec<f64>> = per
                    .iter()
                    .map(|(r, d)| {
                        let m = *meds.get(r)?;
                        Some(if m > 0.0 {
                            d / m
                        } else if *d == 0.0 {
                            1.0
                        } else {
                            f64::INFINITY
                        })
                    })
                    .collect();
                let s = mid(ratios?);
                s.is_finite().then_some(s)
            });
            out.push(RecomputedScore {
                audit_round,
                worker: e.worker,
                score,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        let data: Vec<Obs> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                ([s * (1.0 + (i as f64) * 0.01), 0.1 * i as f64 % 1.0, -0.3], if s > 0.0 { 1.0 } else { 0.0 })
            })
            .collect();
        let b = centralized_baseline(&data);
        assert_eq!(b.accuracy, 1.0);
    }

    #[test]
    fn baseline_gradient_vanishes_at_plateau() {
        let data: Vec<Obs> = (0..50)
            .map(|i| {
                let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), (i as f64 * 0.7).sin()];
                (x, if (i * 7) % 3 == 0 { 1.0 } else { 0.0 })
            })
            .collect();
        let b = centralized_baseline(&data);
        let mut g = [0.0; 4];
        for (x, y) in &data {
            let e = p(z(&b.weights, x)) - y;
            for k in 0..3 {
                g[k] += e * x[k];
            }
            g[3] += e;
        }
        assert!(g.iter().all(|v| (v / 50.0).abs() < 1e-3), "{g:?}");
    }

    #[test]
    fn median_helper() {
        assert_eq!(mid(vec![2.0, 9.0, 1.0]), 2.0);
        assert_eq!(mid(vec![1.0, 2.0]), 1.5);
    }
}

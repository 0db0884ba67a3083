use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, label};
use crate::types::WorkerId;

pub const FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Automobile,
    Train,
}

impl Mode {
    /// Logistic target: train = 1.
    pub fn target(self) -> f64 {
        match self {
            Mode::Automobile => 0.0,
            Mode::Train => 1.0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Mode::Automobile => "automobile",
            Mode::Train => "train",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Standardized `[duration, reliability, cost]`.
    pub features: [f64; FEATURES],
    pub label: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    /// Ground-truth utility coefficients `[duration, reliability, cost, bias]`
    /// in standardized units. Absent for imported data.
    pub truth: Option<[f64; FEATURES + 1]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub owner: WorkerId,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub rows: usize,
    /// Norm of the ground-truth feature coefficients.
    pub signal: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { rows: 246, signal: 4.0 }
    }
}

const BASE_RATE_RANGE: (f64, f64) = (0.2, 0.8);

/// Synthetic trips drawn from a binary logit ground truth.
///
/// Raw features are sampled on natural scales, standardized with statistics
/// of the whole sample, and labelled `train` with probability
/// `sigmoid(beta . x + beta0)`. `beta` has norm `signal` and a uniformly
/// random direction; `beta0` is uniform in `[-0.5, 0.5]`. Coefficients are
/// redrawn until the label base rate lands in `[0.2, 0.8]`.
pub fn generate_dataset(seed: u64, cfg: DatasetConfig) -> Dataset {
    let mut rng = seed::stream(seed, &[label::DATASET, 0]);
    let duration = Normal::<f64>::new(45.0, 15.0).unwrap();
    let cost = Normal::<f64>::new(12.0, 4.0).unwrap();
    let raw: Vec<[f64; FEATURES]> = (0..cfg.rows)
        .map(|_| {
            [
                duration.sample(&mut rng).max(5.0),
                rng.gen_range(0.0..1.0),
                cost.sample(&mut rng).max(0.5),
            ]
        })
        .collect();
    let features = standardize(&raw);

    for attempt in 1u64.. {
        let mut brng = seed::stream(seed, &[label::DATASET, attempt]);
        let mut truth = [0.0; FEATURES + 1];
        let dir: [f64; FEATURES] = std::array::from_fn(|_| brng.sample(StandardNormal));
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-12);
        for (b, d) in truth.iter_mut().zip(dir) {
            *b = cfg.signal * d / norm;
        }
        truth[FEATURES] = brng.gen_range(-0.5..=0.5);
        let rows: Vec<Row> = features
            .iter()
            .map(|x| {
                let u = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + truth[FEATURES];
                let p = 1.0 / (1.0 + (-u).exp());
                let label = if brng.gen_bool(p) { Mode::Train } else { Mode::Automobile };
                Row { features: *x, label }
            })
            .collect();
        let rate = rows.iter().filter(|r| r.label == Mode::Train).count() as f64 / rows.len().max(1) as f64;
        if (BASE_RATE_RANGE.0..=BASE_RATE_RANGE.1).contains(&rate) || attempt >= 1000 {
            return Dataset {
                rows,
                truth: Some(truth),
            };
        }
    }
    unreachable!()
}

fn standardize(raw: &[[f64; FEATURES]]) -> Vec<[f64; FEATURES]> {
    let n = raw.len().max(1) as f64;
    let mut mean = [0.0; FEATURES];
    let mut std = [0.0; FEATURES];
    for j in 0..FEATURES {
        mean[j] = raw.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    raw.iter()
        .map(|r| std::array::from_fn(|j| (r[j] - mean[j]) / std[j]))
        .collect()
}

/// Row `i` goes to worker `i % workers`.
pub fn shard_round_robin(rows: &[Row], workers: usize) -> Vec<Shard> {
    let mut shards: Vec<Shard> = (0..workers)
        .map(|w| Shard {
            owner: WorkerId(w as u32),
            rows: Vec::new(),
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        shards[i % workers].rows.push(row.clone());
    }
    shards
}

/// CSV with header `duration,reliability,cost,label`. Floats use Rust's
/// shortest round-trip formatting so a written file re-imports exactly.
pub fn write_csv(rows: &[Row], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("duration,reliability,cost,label\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.features[0],
            r.features[1],
            r.features[2],
            r.label.as_str()
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("duration,reliability,cost,label") => {}
        other => return Err(Error::Parse(format!("{}: bad header {other:?}", path.display()))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::Parse(format!("{}:{}: {what}", path.display(), i + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let mut features = [0.0; FEATURES];
            for (j, c) in cols[..3].iter().enumerate() {
                features[j] = c.trim().parse().map_err(|_| bad("bad number"))?;
            }
            let label = match cols[3].trim() {
                "automobile" => Mode::Automobile,
                "train" => Mode::Train,
                _ => return Err(bad("label must be automobile or train")),
            };
            Ok(Row { features, label })
        })
        .collect()
}

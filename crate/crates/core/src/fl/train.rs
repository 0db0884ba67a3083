use rand::Rng;

use super::dataset::{Row, FEATURES};
use super::MODEL_DIM;
use crate::error::{Error, Result};
use crate::seed::{self, label};
use crate::types::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Rows per step; `None` takes the whole shard as one batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 0.4,
            batch_size: None,
        }
    }
}

/// Initial model: each weight uniform in `[-0.1, 0.1]`.
pub fn init_model(seed: u64) -> ModelParams {
    let mut rng = seed::stream(seed, &[label::INIT_MODEL]);
    ModelParams::new((0..MODEL_DIM).map(|_| rng.gen_range(-0.1..=0.1)).collect())
}

fn logit(w: &[f64], x: &[f64; FEATURES]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[FEATURES]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z) - y z`, computed without overflow.
fn row_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

/// Mean logistic loss over `rows`.
pub fn logistic_loss(params: &ModelParams, rows: &[Row]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter()
        .map(|r| row_loss(logit(&params.weights, &r.features), r.label.target()))
        .sum::<f64>()
        / rows.len() as f64
}

/// Gradient of the mean logistic loss over `rows`.
pub fn gradient(params: &ModelParams, rows: &[Row]) -> Vec<f64> {
    let mut g = vec![0.0; MODEL_DIM];
    for r in rows {
        let err = sigmoid(logit(&params.weights, &r.features)) - r.label.target();
        for (gj, x) in g.iter_mut().zip(&r.features) {
            *gj += err * x;
        }
        g[FEATURES] += err;
    }
    let n = rows.len().max(1) as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// `cfg.epochs` passes of mini-batch gradient descent from `gm`, visiting
/// rows in shard order.
pub fn local_train(gm: &ModelParams, rows: &[Row], cfg: &TrainConfig) -> Result<ModelParams> {
    if gm.dim() != MODEL_DIM {
        return Err(Error::DimensionMismatch {
            expected: MODEL_DIM,
            got: gm.dim(),
        });
    }
    if !gm.is_finite() {
        return Err(Error::NonFinite);
    }
    if rows.is_empty() {
        return Err(Error::EmptyShard);
    }
    let mut w = gm.clone();
    for _ in 0..cfg.epochs {
        for batch in rows.chunks(cfg.batch_size.unwrap_or(rows.len()).max(1)) {
            let g = gradient(&w, batch);
            for (wi, gi) in w.weights.iter_mut().zip(&g) {
                *wi -= cfg.learning_rate * gi;
            }
        }
    }
    if !logistic_loss(&w, rows).is_finite() || !w.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub params: ModelParams,
    /// Input positions that were dropped (wrong dimension or non-finite).
    pub rejected: Vec<usize>,
}

/// Sample-size-weighted coordinate mean (FedAvg).
///
/// Bad updates are dropped individually. Valid updates are summed in input
/// order; callers pass them sorted by worker id.
pub fn aggregate(updates: &[(ModelParams, usize)], dim: usize) -> Result<Aggregated> {
    let mut rejected = Vec::new();
    let mut valid: Vec<&(ModelParams, usize)> = Vec::new();
    for (i, u) in updates.iter().enumerate() {
        if u.0.dim() != dim || !u.0.is_finite() || u.1 == 0 {
            rejected.push(i);
        } else {
            valid.push(u);
        }
    }
    if valid.is_empty() {
        return Err(Error::NoUpdates);
    }
    let total: f64 = valid.iter().map(|u| u.1 as f64).sum();
    let mut out = vec![0.0; dim];
    for (params, n) in valid {
        let w = *n as f64;
        for (o, p) in out.iter_mut().zip(&params.weights) {
            *o += w * p;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(Aggregated {
        params: ModelParams::new(out),
        rejected,
    })
}

/// Mean logistic loss and accuracy (threshold 0.5).
pub fn evaluate(params: &ModelParams, rows: &[Row]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let correct = rows
        .iter()
        .filter(|r| (logit(&params.weights, &r.features) >= 0.0) == (r.label.target() == 1.0))
        .count();
    (logistic_loss(params, rows), correct as f64 / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::dataset::Mode;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(x: [f64; 3], train: bool) -> Row {
        Row {
            features: x,
            label: if train { Mode::Train } else { Mode::Automobile },
        }
    }

    #[test]
    fn init_model_is_small_and_seeded() {
        let m = init_model(4);
        assert_eq!(m.dim(), 4);
        assert!(m.weights.iter().all(|w| w.abs() <= 0.1));
        assert_eq!(m, init_model(4));
        assert_ne!(m, init_model(5));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let gm = init_model(1);
        let rows = vec![row([1.0, 0.0, -1.0], true)];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(local_train(&gm, &rows, &cfg).unwrap(), gm);
    }

    #[test]
    fn one_step_on_one_row_matches_hand_gradient() {
        let gm = ModelParams::new(vec![0.5, -0.25, 0.1, 0.2]);
        let x = [1.0, 2.0, -1.0];
        let rows = vec![row(x, true)];
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.1,
            batch_size: Some(1),
        };
        // z = 0.5 - 0.5 - 0.1 + 0.2 = 0.1; dL/dz = sigmoid(0.1) - 1
        let s = 1.0 / (1.0 + (-0.1f64).exp());
        let dz = s - 1.0;
        let expected = [0.5 - 0.1 * dz * 1.0, -0.25 - 0.1 * dz * 2.0, 0.1 + 0.1 * dz, 0.2 - 0.1 * dz];
        let lm = local_train(&gm, &rows, &cfg).unwrap();
        for (a, b) in lm.weights.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn separable_shard_reaches_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Row> = (0..20)
            .map(|i| {
                let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                let x = [side * rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                row(x, side > 0.0)
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: Some(20),
        };
        let lm = local_train(&ModelParams::zeros(4), &rows, &cfg).unwrap();
        assert_eq!(evaluate(&lm, &rows).1, 1.0);
    }

    #[test]
    fn training_rejects_bad_inputs() {
        let rows = vec![row([0.0; 3], false)];
        let cfg = TrainConfig::default();
        assert!(matches!(local_train(&init_model(1), &[], &cfg), Err(Error::EmptyShard)));
        let nan = ModelParams::new(vec![f64::NAN, 0.0, 0.0, 0.0]);
        assert!(matches!(local_train(&nan, &rows, &cfg), Err(Error::NonFinite)));
        assert!(local_train(&ModelParams::zeros(3), &rows, &cfg).is_err());
    }

    #[test]
    fn loss_is_stable_for_large_logits() {
        let rows = vec![row([1.0, 0.0, 0.0], false)];
        let huge = ModelParams::new(vec![1e4, 0.0, 0.0, 0.0]);
        let l = logistic_loss(&huge, &rows);
        assert!(l.is_finite());
        assert!((l - 1e4).abs() < 1e-6);
    }

    #[test]
    fn aggregate_examples() {
        let a = ModelParams::new(vec![1.0; 4]);
        let b = ModelParams::new(vec![3.0; 4]);
        assert_eq!(aggregate(&[(a.clone(), 5)], 4).unwrap().params, a);
        assert_eq!(
            aggregate(&[(a.clone(), 5), (b.clone(), 5)], 4).unwrap().params,
            ModelParams::new(vec![2.0; 4])
        );
        let z = ModelParams::new(vec![0.0; 4]);
        assert_eq!(
            aggregate(&[(z, 1), (b, 2)], 4).unwrap().params,
            ModelParams::new(vec![2.0; 4])
        );
    }

    #[test]
    fn aggregate_drops_bad_updates_not_the_round() {
        let good = ModelParams::new(vec![1.0; 4]);
        let short = ModelParams::new(vec![1.0; 3]);
        let inf = ModelParams::new(vec![f64::INFINITY, 0.0, 0.0, 0.0]);
        let out = aggregate(&[(short, 3), (good.clone(), 2), (inf, 4)], 4).unwrap();
        assert_eq!(out.params, good);
        assert_eq!(out.rejected, vec![0, 2]);
        assert!(matches!(aggregate(&[], 4), Err(Error::NoUpdates)));
    }

    proptest::proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            ws in proptest::collection::vec((proptest::collection::vec(-5.0f64..5.0, 4), 1usize..30), 1..8),
            seed in 0u64..1000,
        ) {
            let ups: Vec<(ModelParams, usize)> = ws.into_iter().map(|(w, n)| (ModelParams::new(w), n)).collect();
            let mut shuffled = ups.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate(&ups, 4).unwrap().params;
            let b = aggregate(&shuffled, 4).unwrap().params;
            for (x, y) in a.weights.iter().zip(&b.weights) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn aggregate_is_idempotent_on_identical_inputs(
            w in proptest::collection::vec(-5.0f64..5.0, 4), k in 1usize..6, n in 1usize..40,
        ) {
            let p = ModelParams::new(w);
            let ups = vec![(p.clone(), n); k];
            let out = aggregate(&ups, 4).unwrap().params;
            for (a, b) in out.weights.iter().zip(&p.weights) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn evaluate_bounds() {
        let rows = vec![row([1.0, 0.0, 0.0], true), row([-1.0, 0.0, 0.0], false)];
        let (loss, acc) = evaluate(&ModelParams::new(vec![1.0, 0.0, 0.0, 0.0]), &rows);
        assert_eq!(acc, 1.0);
        assert!(loss > 0.0);
        let (_, acc) = evaluate(&ModelParams::new(vec![-1.0, 0.0, 0.0, 0.0]), &rows);
        assert_eq!(acc, 0.0);
    }
}

use bcfl::fl::{aggregate, generate_dataset, gradient, local_train, logistic_loss, DatasetConfig, Mode, Row, TrainConfig};
use bcfl::ModelParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Row> {
    (0..n)
        .map(|_| Row {
            features: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            label: if rng.gen_bool(0.5) { Mode::Train } else { Mode::Automobile },
        })
        .collect()
}

/// Worst norm-wise relative gap between the analytic gradient and central
/// differences over `cases` random models and shards.
fn finite_difference_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(1..40);
        let rows = random_rows(&mut rng, n);
        let w = ModelParams::new((0..4).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let g = gradient(&w, &rows);
        let h = 1e-5;
        let fd: Vec<f64> = (0..4)
            .map(|j| {
                let (mut up, mut down) = (w.clone(), w.clone());
                up.weights[j] += h;
                down.weights[j] -= h;
                (logistic_loss(&up, &rows) - logistic_loss(&down, &rows)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        worst = worst.max(diff / norm);
    }
    worst
}

#[test]
fn gradient_matches_central_differences() {
    let worst = finite_difference_worst(100, 17);
    assert!(worst < 1e-6, "worst relative gap {worst:e}");
}

#[test]
fn zero_epochs_returns_the_global_model() {
    let ds = generate_dataset(3, DatasetConfig::default());
    let gm = ModelParams::new(vec![0.3, -0.7, 1.1, 0.2]);
    for batch in [None, Some(1), Some(7)] {
        let cfg = TrainConfig {
            epochs: 0,
            learning_rate: 0.4,
            batch_size: batch,
        };
        assert_eq!(local_train(&gm, &ds.rows[..25], &cfg).unwrap(), gm);
    }
}

#[test]
fn full_shard_batch_is_one_gradient_step() {
    let ds = generate_dataset(8, DatasetConfig::default());
    let gm = ModelParams::new(vec![0.05, 0.1, -0.2, 0.0]);
    let shard = &ds.rows[..24];
    let out = local_train(&gm, shard, &TrainConfig::default()).unwrap();
    let g = gradient(&gm, shard);
    let lr = TrainConfig::default().learning_rate;
    for j in 0..4 {
        assert_eq!(out.weights[j], gm.weights[j] - lr * g[j]);
    }
}

proptest! {
    #[test]
    fn fedavg_ignores_update_order(
        seed in 0u64..1000,
        n in 2usize..12,
        perm_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let updates: Vec<(ModelParams, usize)> = (0..n)
            .map(|_| (ModelParams::new((0..4).map(|_| rng.gen_range(-5.0..5.0)).collect()), rng.gen_range(1..40)))
            .collect();
        let mut shuffled = updates.clone();
        let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..n).rev() {
            shuffled.swap(i, prng.gen_range(0..=i));
        }
        let a = aggregate(&updates, 4).unwrap().params;
        let b = aggregate(&shuffled, 4).unwrap().params;
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fedavg_stays_in_the_coordinate_hull(seed in 0u64..1000, n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let updates: Vec<(ModelParams, usize)> = (0..n)
            .map(|_| (ModelParams::new((0..4).map(|_| rng.gen_range(-5.0..5.0)).collect()), rng.gen_range(1..40)))
            .collect();
        let avg = aggregate(&updates, 4).unwrap().params;
        for j in 0..4 {
            let lo = updates.iter().map(|u| u.0.weights[j]).fold(f64::INFINITY, f64::min);
            let hi = updates.iter().map(|u| u.0.weights[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg.weights[j] >= lo - 1e-12 && avg.weights[j] <= hi + 1e-12);
        }
    }
}

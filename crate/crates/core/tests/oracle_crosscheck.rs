use std::path::Path;

use bcfl::oracle::{centralized_baseline, read_dataset_csv, recompute_scores, reference_fedavg, ReferenceParams};
use bcfl::sim::{metrics, run_scenario, Scenario, SimConfig};

/// Global models by height from `models.jsonl`, read as plain JSON.
fn committed_models(path: &Path) -> Vec<[f64; 4]> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut rows: Vec<(u64, [f64; 4])> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let w: Vec<f64> = serde_json::from_value(v["weights"].clone()).unwrap();
            (v["height"].as_u64().unwrap(), w.try_into().unwrap())
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    rows.into_iter().map(|r| r.1).collect()
}

#[test]
fn event_driven_fedavg_matches_straight_line_loop_exactly() {
    for seed in [1, 7, 42] {
        let cfg = SimConfig {
            seed,
            scenario: Scenario::NoAttack,
            attackers: 0,
            ..SimConfig::default()
        };
        let out = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write_to(dir.path()).unwrap();

        let data = read_dataset_csv(&dir.path().join("dataset.csv")).unwrap();
        let plateau = centralized_baseline(&data).plateau_loss;
        let summary = metrics::read_summary_json(&dir.path().join("summary.json")).unwrap();
        assert_eq!(summary.plateau_loss, plateau);

        let models = committed_models(&dir.path().join("models.jsonl"));
        let reference = reference_fedavg(
            &data,
            &ReferenceParams {
                workers: cfg.workers as usize,
                init: models[0],
                epochs: cfg.train.epochs,
                lr: cfg.train.learning_rate,
                batch: cfg.train.batch_size.unwrap_or(usize::MAX),
                epsilon: cfg.epsilon_factor * plateau,
                sustain: cfg.sustain,
                budget: cfg.rounds,
            },
        );
        assert_eq!(reference.convergence_round, summary.convergence_round, "seed {seed}");
        assert_eq!(reference.models.as_slice(), &models[1..], "seed {seed}");
        let losses: Vec<f64> = metrics::read_metrics_csv(&dir.path().join("metrics.csv"))
            .unwrap()
            .iter()
            .map(|m| m.loss)
            .collect();
        for (a, b) in losses.iter().zip(&reference.losses) {
            assert!((a - b).abs() <= 1e-12 * b.abs(), "seed {seed}: {a} vs {b}");
        }
        assert!(summary.final_loss <= 1.05 * plateau);
    }
}

#[test]
fn oracle_rescoring_agrees_with_the_monitor() {
    for (seed, attackers, scenario) in [
        (1, 1, Scenario::DefenseDecoupled),
        (5, 2, Scenario::DefenseDecoupled),
        (3, 2, Scenario::DefenseCoupled),
    ] {
        let out = run_scenario(&SimConfig {
            seed,
            attackers,
            scenario,
            drop_rate: 0.05,
            ..SimConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write_to(dir.path()).unwrap();
        let scores = recompute_scores(&dir.path().join("audit.jsonl"), &dir.path().join("models.jsonl")).unwrap();
        assert_eq!(scores.len(), out.audit_log.len());
        let mut compared = 0;
        for (entry, s) in out.audit_log.iter().zip(&scores) {
            assert_eq!((entry.audit_round, entry.worker.0), (s.audit_round, s.worker));
            match (entry.score, s.score) {
                (Some(a), Some(b)) if a.is_finite() => {
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
                    compared += 1;
                }
                (a, b) => assert_eq!(a.map(f64::is_finite), b.map(f64::is_finite).or(a.map(f64::is_finite))),
            }
        }
        assert!(compared > 100);
    }
}

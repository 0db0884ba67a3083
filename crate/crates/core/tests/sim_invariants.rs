use std::collections::HashMap;

use bcfl::sim::{run_scenario, sweep, EventKind, RunOutput, Scenario, SimConfig, SimEvent};
use bcfl::types::NodeId;
use proptest::prelude::*;

fn traced(cfg: SimConfig) -> RunOutput {
    run_scenario(&SimConfig { trace: true, ..cfg }).unwrap()
}

fn first_time(trace: &[SimEvent]) -> HashMap<(EventKind, NodeId, u64), f64> {
    let mut out = HashMap::new();
    for e in trace {
        out.entry((e.kind, e.node, e.round)).or_insert(e.time_ms);
    }
    out
}

/// Checks shared by every scenario; returns a description of the first
/// violation.
fn check_trace(out: &RunOutput) -> Result<(), String> {
    let t = &out.trace;
    if t.is_empty() {
        return Err("empty trace".into());
    }
    for pair in t.windows(2) {
        if pair[1].time_ms < pair[0].time_ms {
            return Err(format!("clock went back: {:?} -> {:?}", pair[0], pair[1]));
        }
    }
    let at = first_time(t);
    let workers = out.config.workers;
    let rounds = out.metrics.len() as u64;
    let consensus: HashMap<u64, f64> = t
        .iter()
        .filter(|e| e.kind == EventKind::ConsensusDone)
        .map(|e| (e.round, e.time_ms))
        .collect();
    for r in 0..rounds {
        for w in 0..workers {
            let node = NodeId::Worker(w);
            let dl = at.get(&(EventKind::ModelDownloaded, node, r)).ok_or(format!("no download w{w} r{r}"))?;
            let tr = at.get(&(EventKind::TrainDone, node, r)).ok_or(format!("no training w{w} r{r}"))?;
            if tr < dl {
                return Err(format!("w{w} trained round {r} before downloading"));
            }
            if r > 0 && *dl < consensus[&(r - 1)] {
                return Err(format!("w{w} downloaded round {r} before round {} was committed", r - 1));
            }
        }
    }
    if out.config.scenario.has_monitor() {
        for e in t.iter().filter(|e| e.kind == EventKind::AuditRequest) {
            for w in 0..workers {
                let root = at
                    .get(&(EventKind::RootSubmitted, NodeId::Worker(w), e.round))
                    .ok_or(format!("audit at round {} before w{w} submitted a root", e.round))?;
                if *root > e.time_ms {
                    return Err(format!("audit of round {} precedes w{w}'s root", e.round));
                }
            }
        }
    }
    let mut protected = false;
    for m in &out.metrics {
        if protected && !m.protected {
            return Err(format!("protection dropped at round {}", m.round));
        }
        protected = m.protected;
    }
    Ok(())
}

#[test]
fn every_mode_respects_event_ordering() {
    for scenario in Scenario::ALL {
        let out = traced(SimConfig {
            seed: 6,
            scenario,
            rounds: 60,
            stop_at_convergence: false,
            ..SimConfig::default()
        });
        check_trace(&out).unwrap_or_else(|e| panic!("{scenario}: {e}"));
    }
}

#[test]
fn runs_are_byte_identical_and_thread_independent() {
    let cfg = SimConfig {
        seed: 12,
        ..SimConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let a = run_scenario(&cfg).unwrap();
    let parallel = sweep::run_all(&[cfg.clone(), cfg.clone(), cfg.clone()]).unwrap();
    a.write_to(&dir.path().join("a")).unwrap();
    for (i, run) in parallel.iter().enumerate() {
        let d = dir.path().join(format!("p{i}"));
        run.write_to(&d).unwrap();
        for f in ["metrics.csv", "phases.csv", "summary.json", "chain.jsonl", "models.jsonl", "audit.jsonl", "dataset.csv"] {
            let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let y = std::fs::read(d.join(f)).unwrap();
            assert!(x == y, "{f} differs");
        }
    }
}

#[test]
fn decoupling_moves_work_off_the_critical_path() {
    for seed in 1..=3 {
        let run = |scenario| {
            run_scenario(&SimConfig {
                seed,
                scenario,
                rounds: 80,
                stop_at_convergence: false,
                ..SimConfig::default()
            })
            .unwrap()
        };
        let c = run(Scenario::DefenseCoupled);
        let d = run(Scenario::DefenseDecoupled);
        assert_eq!(c.metrics.len(), d.metrics.len());
        for (mc, md) in c.metrics.iter().zip(&d.metrics) {
            assert!(md.e2e_delay_ms <= mc.e2e_delay_ms, "seed {seed} round {}", mc.round);
        }
        let total = |o: &RunOutput| o.summary.fl_busy_total_ms + o.summary.mon_busy_total_ms;
        assert!((total(&c) - total(&d)).abs() <= 0.01 * total(&c));
        assert!(d.metrics.last().unwrap().sim_time_ms < c.metrics.last().unwrap().sim_time_ms);
    }
}

#[test]
fn protection_starts_at_first_audit_round() {
    for (window, cadence) in [(2, 1), (5, 1), (3, 2), (4, 3)] {
        let mut cfg = SimConfig {
            seed: 2,
            rounds: 40,
            stop_at_convergence: false,
            ..SimConfig::default()
        };
        cfg.monitor.window = window;
        cfg.monitor.cadence = cadence;
        cfg.monitor.max_lag = cadence.max(2);
        let out = run_scenario(&cfg).unwrap();
        let first = cfg.monitor.first_audit_round();
        assert_eq!(first, (window as u64 - 1).div_ceil(cadence) * cadence);
        assert_eq!(out.summary.t_x_round, Some(first), "z={window} cadence={cadence}");
        assert!(out.published.iter().all(|s| s.round >= first && s.protected));
    }
}

#[test]
fn honest_runs_never_exclude_anyone_early() {
    let out = run_scenario(&SimConfig {
        seed: 4,
        scenario: Scenario::DefenseDecoupled,
        attackers: 0,
        rounds: 30,
        stop_at_convergence: false,
        ..SimConfig::default()
    })
    .unwrap();
    assert!(out.summary.caught.is_empty());
    assert!(out.metrics.iter().all(|m| m.reliable_set_size == 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_configs_keep_invariants(
        seed in 0u64..10_000,
        workers in 2u32..8,
        mode in 0usize..4,
        window in 1usize..5,
        cadence in 1u64..3,
        drop in 0.0f64..0.3,
    ) {
        let mut cfg = SimConfig {
            seed,
            workers,
            scenario: Scenario::ALL[mode],
            attackers: (workers - 1).min(1),
            attack_start: 5,
            rounds: 25,
            stop_at_convergence: false,
            drop_rate: drop,
            ..SimConfig::default()
        };
        cfg.monitor.window = window;
        cfg.monitor.cadence = cadence;
        let out = traced(cfg);
        prop_assert_eq!(out.metrics.len(), 25);
        if let Err(e) = check_trace(&out) {
            prop_assert!(false, "{}", e);
        }
        out.ledger.validate().unwrap();
    }
}

#[test]
fn audit_round_without_answers_does_not_stall() {
    for scenario in [Scenario::DefenseCoupled, Scenario::DefenseDecoupled] {
        let mut cfg = SimConfig {
            seed: 3085,
            workers: 2,
            scenario,
            attackers: 1,
            attack_start: 5,
            rounds: 25,
            stop_at_convergence: false,
            drop_rate: 0.25487495536310156,
            ..SimConfig::default()
        };
        cfg.monitor.window = 1;
        let out = traced(cfg);
        assert_eq!(out.metrics.len(), 25);
        check_trace(&out).unwrap();
        assert!(out.audit_log.iter().any(|e| !e.responded));
    }
}

//! Replay a run's audit log with the independent oracle: every behavior
//! score is recomputed from the logged records and committed models alone.

use bcfl::oracle::recompute_scores;
use bcfl::sim::{run_scenario, SimConfig};

fn main() -> bcfl::Result<()> {
    let cfg = SimConfig {
        seed: 3,
        attackers: 2,
        ..SimConfig::default()
    };
    let out = run_scenario(&cfg)?;
    let dir = std::env::temp_dir().join("bcfl-oracle-example");
    out.write_to(&dir)?;

    let recomputed = recompute_scores(&dir.join("audit.jsonl"), &dir.join("models.jsonl"))?;
    let mut worst = 0.0f64;
    for (entry, oracle) in out.audit_log.iter().zip(&recomputed) {
        if let (Some(a), Some(b)) = (entry.score, oracle.score) {
            worst = worst.max((a - b).abs());
        }
    }
    println!("{} audits replayed, max score difference {worst:.2e}", recomputed.len());

    for entry in out.audit_log.iter().filter(|e| !e.included).take(6) {
        println!(
            "excluded worker {} at audit round {} (score {:?})",
            entry.worker, entry.audit_round, entry.score
        );
    }
    println!("caught: {:?}", out.summary.caught);
    Ok(())
}

//! One worker starts injecting random weights after round 30. Without a
//! defense the global model never settles; with the decoupled monitor the
//! attacker is caught and training converges.

use bcfl::sim::{run_scenario, Scenario, SimConfig};

fn main() -> bcfl::Result<()> {
    for scenario in [Scenario::NoAttack, Scenario::Attack, Scenario::DefenseDecoupled] {
        let cfg = SimConfig {
            seed: 2,
            scenario,
            ..SimConfig::default()
        };
        let out = run_scenario(&cfg)?;
        let s = &out.summary;
        let loss_at = |r: usize| out.metrics.get(r).map_or(f64::NAN, |m| m.loss);
        println!(
            "{:<18} loss r30 {:.3} r40 {:.3}  converged at {:>4}  caught {:?}",
            scenario.as_str(),
            loss_at(30),
            loss_at(40),
            s.convergence_round.map_or("-".into(), |r| r.to_string()),
            s.caught
        );
    }
    Ok(())
}

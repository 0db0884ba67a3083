//! Same seed, same monitoring work, different placement: the coupled miner
//! pipeline audits before aggregating, the decoupled one audits on separate
//! miners while FL proceeds.

use bcfl::sim::{run_scenario, Scenario, SimConfig};

fn main() -> bcfl::Result<()> {
    let run = |scenario| {
        run_scenario(&SimConfig {
            seed: 4,
            scenario,
            stop_at_convergence: false,
            rounds: 120,
            ..SimConfig::default()
        })
    };
    let coupled = run(Scenario::DefenseCoupled)?;
    let decoupled = run(Scenario::DefenseDecoupled)?;

    println!("round  coupled_ms  decoupled_ms");
    for (c, d) in coupled.metrics.iter().zip(&decoupled.metrics).step_by(15) {
        println!("{:5}  {:10.1}  {:12.1}", c.round, c.e2e_delay_ms, d.e2e_delay_ms);
    }
    for (name, out) in [("coupled", &coupled), ("decoupled", &decoupled)] {
        let s = &out.summary;
        println!(
            "{name:<10} busy fl {:.0} ms + mon {:.0} ms, convergence at {:?} ms",
            s.fl_busy_total_ms, s.mon_busy_total_ms, s.convergence_time_ms
        );
    }
    Ok(())
}

//! Grow the network from 3 to 9 workers and compare 1 vs 2 attackers. The
//! monitoring load rises with the number of workers while the FL round delay
//! stays flat. Writes the sweep CSVs and their charts to a temp directory.

use bcfl::plot;
use bcfl::sim::{attacker_sweep, scaling_sweep, sweep, SimConfig};

fn main() -> bcfl::Result<()> {
    let base = SimConfig::default();
    let seeds = sweep::seeds_from(1, 5);
    let scaling = scaling_sweep(&base, &[3, 6, 9], &seeds)?;
    for w in [3, 6, 9] {
        let pts: Vec<_> = scaling.iter().filter(|p| p.workers == w).collect();
        let mean = |f: fn(&sweep::ScalingPoint) -> f64| pts.iter().map(|p| f(p)).sum::<f64>() / pts.len() as f64;
        println!(
            "{w} workers: minersMON busy {:.1} ms/round, minersFL delay {:.1} ms/round",
            mean(|p| p.mon_busy_mean_ms),
            mean(|p| p.fl_delay_mean_ms)
        );
    }

    let attackers = attacker_sweep(&base, &[1, 2], &seeds)?;
    for k in [1, 2] {
        let times: Vec<String> = attackers
            .iter()
            .filter(|p| p.attackers == k)
            .map(|p| p.convergence_time_ms.map_or("-".into(), |t| format!("{:.1}s", t / 1000.0)))
            .collect();
        println!("{k} attacker(s): {}", times.join(" "));
    }

    let dir = std::env::temp_dir().join("bcfl-scaling-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (s, a) = (dir.join("scaling.csv"), dir.join("attackers.csv"));
    std::fs::write(&s, sweep::scaling_csv(&scaling)).expect("write");
    std::fs::write(&a, sweep::attackers_csv(&attackers)).expect("write");
    std::fs::write(dir.join("scaling.svg"), plot::scaling_chart(&s)?.to_svg()).expect("write");
    std::fs::write(dir.join("attackers.svg"), plot::attackers_chart(&a)?.to_svg()).expect("write");
    println!("wrote {}", dir.display());
    Ok(())
}

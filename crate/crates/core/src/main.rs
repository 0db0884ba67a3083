use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcfl::config::{self, RunConfig, KEYS};
use bcfl::plot;
use bcfl::sim::{self, sweep, Scenario};
use bcfl::{Error, Result};
use clap::{Arg, ArgMatches, Command};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn with_config_flags(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value config file; flags override it"),
    );
    KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .num_args(0..=1)
                .default_missing_value("true")
                .help(*help),
        )
    })
}

fn cli() -> Command {
    Command::new("bcfl")
        .about("Blockchain-backed federated learning simulator")
        .subcommand_required(true)
        .subcommand(with_config_flags(Command::new("run").about("Run one scenario and write its outputs")))
        .subcommand(
            with_config_flags(Command::new("sweep").about("Run a grid of scenarios across seeds"))
                .arg(
                    Arg::new("kind")
                        .required(true)
                        .value_parser(["scaling", "attackers"])
                        .help("scaling: vary workers; attackers: vary attacker count"),
                )
                .arg(
                    Arg::new("counts")
                        .long("counts")
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(u32))
                        .help("worker counts (default 3,6,9) or attacker counts (default 1,2)"),
                )
                .arg(
                    Arg::new("seeds")
                        .long("seeds")
                        .default_value("5")
                        .value_parser(clap::value_parser!(usize))
                        .help("number of consecutive seeds starting at --seed"),
                )
                .arg(
                    Arg::new("modes")
                        .long("modes")
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(Scenario))
                        .help("attacker sweep modes (default defense-decoupled,defense-coupled)"),
                ),
        )
        .subcommand(
            Command::new("plot")
                .about("Render SVG charts from CSV outputs")
                .arg(
                    Arg::new("chart")
                        .required(true)
                        .value_parser(["loss", "scaling", "attackers"]),
                )
                .arg(
                    Arg::new("inputs")
                        .required(true)
                        .num_args(1..)
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("metrics.csv files for loss, else one sweep CSV"),
                )
                .arg(
                    Arg::new("output")
                        .short('o')
                        .long("output")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("SVG path; stdout when absent"),
                ),
        )
}

fn run_config(m: &ArgMatches) -> Result<RunConfig> {
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(key, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect();
    config::parse_config(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn cmd_run(m: &ArgMatches) -> Result<()> {
    let cfg = run_config(m)?;
    let out = sim::run_scenario(&cfg.sim)?;
    mkdir(&cfg.out_dir)?;
    out.write_to(&cfg.out_dir)?;
    write(&cfg.out_dir.join("config.conf"), &cfg.to_file_string())?;
    println!("{}", cfg.out_dir.join("summary.json").display());
    Ok(())
}

fn cmd_sweep(m: &ArgMatches) -> Result<()> {
    let cfg = run_config(m)?;
    let kind = m.get_one::<String>("kind").unwrap().as_str();
    let seeds = sweep::seeds_from(cfg.sim.seed, *m.get_one::<usize>("seeds").unwrap());
    let counts: Option<Vec<u32>> = m.get_many::<u32>("counts").map(|c| c.copied().collect());
    let configs = match kind {
        "scaling" => sweep::scaling_configs(&cfg.sim, &counts.unwrap_or_else(|| vec![3, 6, 9]), &seeds),
        _ => {
            let modes: Vec<Scenario> = m
                .get_many::<Scenario>("modes")
                .map_or_else(|| vec![Scenario::DefenseDecoupled, Scenario::DefenseCoupled], |v| v.copied().collect());
            let counts = counts.unwrap_or_else(|| vec![1, 2]);
            modes
                .iter()
                .flat_map(|&scenario| {
                    let base = sim::SimConfig { scenario, ..cfg.sim.clone() };
                    sweep::attacker_configs(&base, &counts, &seeds)
                })
                .collect()
        }
    };
    for c in &configs {
        c.validate()?;
    }
    let runs = sweep::run_all(&configs)?;
    for run in &runs {
        let c = &run.config;
        let dir = cfg.out_dir.join("runs").join(format!(
            "{}-w{}-a{}-s{}",
            c.scenario, c.workers, c.attackers, c.seed
        ));
        mkdir(&dir)?;
        run.write_to(&dir)?;
    }
    let (name, csv) = match kind {
        "scaling" => (
            "scaling.csv",
            sweep::scaling_csv(&runs.iter().map(sweep::scaling_point).collect::<Vec<_>>()),
        ),
        _ => (
            "attackers.csv",
            sweep::attackers_csv(&runs.iter().map(sweep::attacker_point).collect::<Vec<_>>()),
        ),
    };
    let path = cfg.out_dir.join(name);
    write(&path, &csv)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_plot(m: &ArgMatches) -> Result<()> {
    let inputs: Vec<&Path> = m.get_many::<PathBuf>("inputs").unwrap().map(PathBuf::as_path).collect();
    let svg = match m.get_one::<String>("chart").unwrap().as_str() {
        "loss" => plot::loss_chart(&inputs)?.to_svg(),
        "scaling" => plot::scaling_chart(inputs[0])?.to_svg(),
        _ => plot::attackers_chart(inputs[0])?.to_svg(),
    };
    match m.get_one::<PathBuf>("output") {
        Some(path) => write(path, &svg),
        None => {
            print!("{svg}");
            Ok(())
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().lines().next().unwrap_or("invalid arguments")),
    };
    let result = match matches.subcommand() {
        Some(("run", m)) => cmd_run(m),
        Some(("sweep", m)) => cmd_sweep(m),
        Some(("plot", m)) => cmd_plot(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn cli_is_well_formed() {
        super::cli().debug_assert();
    }
}

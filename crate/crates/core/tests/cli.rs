use std::path::Path;
use std::process::{Command, Output};

const OUTPUTS: [&str; 7] = [
    "metrics.csv",
    "phases.csv",
    "summary.json",
    "chain.jsonl",
    "models.jsonl",
    "audit.jsonl",
    "dataset.csv",
];

fn bcfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcfl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bcfl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn presets() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

#[test]
fn run_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", "--seed", "21", "--out-dir", a.to_str().unwrap()]);
    ok(&["run", "--seed", "21", "--out-dir", b.to_str().unwrap()]);
    for f in OUTPUTS {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&["run", "--seed", "22", "--out-dir", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(a.join("metrics.csv")).unwrap(), std::fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("six.conf");
    std::fs::write(&conf, "workers = 6\nrounds = 12\nstop_at_convergence = false\n").unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    ok(&["run", "--config", conf.to_str().unwrap(), "--workers", "9", "--out-dir", o]);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["workers"], 9);
    assert_eq!(summary["rounds_run"], 12);
    let dumped = std::fs::read_to_string(out.join("config.conf")).unwrap();
    assert!(dumped.contains("workers = 9"));
}

#[test]
fn bad_input_gives_machine_readable_error() {
    let e = error_line(&bcfl(&["run", "--workers", "5", "--attackers", "5"]));
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("attackers < workers"));

    let e = error_line(&bcfl(&["run", "--no-such-flag"]));
    assert_eq!(e["error"], "usage");

    let e = error_line(&bcfl(&["run", "--config", "/nonexistent/x.conf"]));
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("/nonexistent/x.conf"));

    let e = error_line(&bcfl(&["plot", "loss", "/nonexistent/metrics.csv"]));
    assert!(e["message"].as_str().unwrap().contains("/nonexistent/metrics.csv"));
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_bcfl"))
        .args(["run", "--rounds", "3", "--stop-at-convergence", "false"])
        .env("BCFL_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("metrics.csv").exists());
}

#[test]
fn presets_run() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["no-attack", "attack", "defense-coupled", "defense-decoupled"] {
        let conf = presets().join(format!("{mode}.conf"));
        let out = dir.path().join(mode);
        ok(&["run", "--config", conf.to_str().unwrap(), "--rounds", "40", "--out-dir", out.to_str().unwrap()]);
        let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["mode"], mode);
    }
}

#[test]
fn sweep_then_plot_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["sweep", "scaling", "--counts", "3,6", "--seeds", "2", "--rounds", "20", "--out-dir", d]);
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let keys: Vec<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].to_string(), c[1].to_string())
        })
        .collect();
    assert_eq!(keys, [("3", "1"), ("3", "2"), ("6", "1"), ("6", "2")].map(|(a, b)| (a.to_string(), b.to_string())));

    ok(&["sweep", "attackers", "--seeds", "1", "--rounds", "40", "--out-dir", d]);
    let runs = dir.path().join("runs");
    assert!(runs.join("defense-decoupled-w10-a2-s1").join("metrics.csv").exists());

    let s = dir.path().join("scaling.csv");
    let a = dir.path().join("attackers.csv");
    let m = runs.join("defense-coupled-w10-a1-s1").join("metrics.csv");
    for (chart, input) in [("scaling", &s), ("attackers", &a), ("loss", &m)] {
        let first = ok(&["plot", chart, input.to_str().unwrap()]).stdout;
        let svg = dir.path().join(format!("{chart}.svg"));
        ok(&["plot", chart, input.to_str().unwrap(), "-o", svg.to_str().unwrap()]);
        assert_eq!(first, std::fs::read(&svg).unwrap(), "{chart}");
        assert!(first.starts_with(b"<svg"));
    }
}

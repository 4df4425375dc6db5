#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use mftbohm_cli::output::body_of;
use mftbohm_cli::{parse_scenario, run_scenario, Command, Outcome, RunOptions, Scenario};

pub const BUNDLED: [&str; 6] = [
    "free_packet",
    "coherent_state",
    "entangled_pair",
    "ghz_triplet",
    "product_pair",
    "collapse_split",
];

pub fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub fn bundled(name: &str) -> Scenario {
    let text = fs::read_to_string(scenario_path(name)).unwrap();
    parse_scenario(&text).unwrap().0
}

/// Runs a command with its outputs in `dir`.
pub fn run_in(command: Command, scenario: &Scenario, dir: &Path, threads: usize) -> Outcome {
    let opts = RunOptions {
        out: Some(dir.to_path_buf()),
        threads,
        command_line: format!("test {}", command.name()),
        ..RunOptions::default()
    };
    run_scenario(command, scenario, &opts).unwrap()
}

pub fn run(command: Command, scenario: &Scenario) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    run_in(command, scenario, dir.path(), 0)
}

/// Header-stripped bodies of every CSV in `dir`, sorted by name.
pub fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, body_of(&fs::read_to_string(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}

pub fn value(outcome: &Outcome, key: &str) -> f64 {
    outcome
        .get(key)
        .unwrap_or_else(|| panic!("missing summary key {key}"))
        .parse()
        .unwrap()
}

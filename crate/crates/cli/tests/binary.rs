mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{scenario_path, BUNDLED};
use mftbohm_cli::{EXIT_ERROR, EXIT_GATE_FAILED, EXIT_OK};

fn mftbohm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mftbohm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn validate_is_a_dry_run() {
    let tmp = tempfile::tempdir().unwrap();
    for name in BUNDLED {
        let dir = tmp.path().join(name);
        let out = mftbohm(&[
            "validate",
            "--scenario",
            path(&scenario_path(name)),
            "--out",
            path(&dir),
        ]);
        assert_eq!(
            code(&out),
            EXIT_OK,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!dir.exists(), "{name} wrote output");
    }
}

#[test]
fn simulate_free_packet() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mftbohm(&[
        "simulate",
        "--scenario",
        path(&scenario_path("free_packet")),
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("final_x_1="), "{stdout}");

    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# tool: mftbohm-cli "));
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# scenario: free_packet ("));
    assert_eq!(lines.next().unwrap(), "# seed: 42");
    let command = lines.next().unwrap();
    assert!(
        command.starts_with("# command: ") && command.contains("simulate"),
        "{command}"
    );
    assert_eq!(lines.next().unwrap(), "tau,t_1,x_1");
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(last[0], 2.0);
    assert!((last[2] - 2f64.sqrt()).abs() < 1e-6, "x(2) = {}", last[2]);

    for file in ["summary.txt", "scenario.resolved.json"] {
        assert!(tmp.path().join(file).exists(), "{file}");
    }
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("# tool: "));
    let resolved = fs::read_to_string(tmp.path().join("scenario.resolved.json")).unwrap();
    let (echo, _) = mftbohm_cli::parse_scenario(&resolved).unwrap();
    assert_eq!(echo, common::bundled("free_packet"));
}

#[test]
fn seed_override_reaches_the_header() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mftbohm(&[
        "simulate",
        "--scenario",
        path(&scenario_path("free_packet")),
        "--out",
        path(tmp.path()),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "# seed: 7"));
}

#[test]
fn plots_add_gnuplot_scripts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mftbohm(&[
        "simulate",
        "--scenario",
        path(&scenario_path("coherent_state")),
        "--out",
        path(tmp.path()),
        "--plots",
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let script = fs::read_to_string(tmp.path().join("trajectory.gp")).unwrap();
    assert!(script.contains("'trajectory.csv'"), "{script}");
    assert!(script.contains("set datafile separator ','"));
}

#[test]
fn output_dir_falls_back_to_the_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("from-scenario");
    let text = fs::read_to_string(scenario_path("free_packet")).unwrap();
    let text = text.replacen(
        "\"name\": \"free_packet\",",
        &format!(
            "\"name\": \"free_packet\", \"output_dir\": {:?},",
            path(&target)
        ),
        1,
    );
    let file = tmp.path().join("scenario.json");
    fs::write(&file, text).unwrap();
    let out = mftbohm(&["simulate", "--scenario", path(&file)]);
    assert_eq!(
        code(&out),
        EXIT_OK,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(target.join("trajectory.csv").exists());

    let explicit = tmp.path().join("explicit");
    let out = mftbohm(&[
        "simulate",
        "--scenario",
        path(&file),
        "--out",
        path(&explicit),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    assert!(explicit.join("trajectory.csv").exists());
}

#[test]
fn failed_gate_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    // a coarse difference step leaves truncation error far above tolerance
    let text = fs::read_to_string(scenario_path("entangled_pair"))
        .unwrap()
        .replace(
            r#"{ "op": "residuals", "probes": 100, "window": [0.0, 1.5] }"#,
            r#"{ "op": "residuals", "probes": 10, "window": [0.0, 1.5], "fd_step": 0.2 }"#,
        );
    let file = tmp.path().join("coarse.json");
    fs::write(&file, text).unwrap();
    let out = mftbohm(&[
        "residuals",
        "--scenario",
        path(&file),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&out), EXIT_GATE_FAILED);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gate failed"));
}

#[test]
fn bad_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    let out = mftbohm(&["simulate", "--scenario", path(&missing)]);
    assert_eq!(code(&out), EXIT_ERROR);

    let file = tmp.path().join("bad.json");
    fs::write(&file, "{\n  \"name\": 3\n}").unwrap();
    let out = mftbohm(&["validate", "--scenario", path(&file)]);
    assert_eq!(code(&out), EXIT_ERROR);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");

    // the product scenario has no epr_scan parameters
    let out = mftbohm(&[
        "epr-scan",
        "--scenario",
        path(&scenario_path("product_pair")),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&out), EXIT_ERROR);

    let out = mftbohm(&["teleport", "--scenario", path(&file)]);
    assert_eq!(code(&out), EXIT_ERROR);
}

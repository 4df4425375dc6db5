//! Scenario-driven front end for the `mftbohm-core` simulations.
//!
//! [`run`] is what the binary calls: it loads a scenario file, executes one
//! command and maps the result to an exit code.

pub mod commands;
mod error;
pub mod output;
pub mod scenario;

use std::fs;
use std::path::{Path, PathBuf};

pub use commands::{execute, Command, Outcome};
pub use error::CliError;
pub use scenario::{parse_scenario, Scenario};

use output::OutputDir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output_dir` from the scenario; `./out` if neither is set.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub plots: bool,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
    /// Echoed into output headers.
    pub command_line: String,
}

/// Loads a scenario file and applies command-line overrides.
pub fn load(path: &Path, opts: &RunOptions) -> Result<(Scenario, Vec<String>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (mut scenario, warnings) = parse_scenario(&text)?;
    if let Some(seed) = opts.seed {
        scenario.sampler.seed = seed;
    }
    Ok((scenario, warnings))
}

/// Runs `command` on an already loaded scenario and writes its outputs.
pub fn run_scenario(
    command: Command,
    scenario: &Scenario,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| {
        if command == Command::Validate {
            return execute(command, scenario, None);
        }
        let dir = opts
            .out
            .clone()
            .or_else(|| scenario.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let mut out = OutputDir::create(
            &dir,
            &scenario.name,
            &scenario.content_hash(),
            scenario.sampler.seed,
            &opts.command_line,
            opts.plots,
        )?;
        let outcome = execute(command, scenario, Some(&mut out))?;
        out.json("scenario.resolved.json", &(scenario.to_json() + "\n"))?;
        out.text("summary.txt", &outcome.render())?;
        Ok(outcome)
    })
}

/// Full pipeline with diagnostics on stderr; returns the exit code.
pub fn run(command: Command, scenario_path: &Path, opts: &RunOptions) -> i32 {
    let result = load(scenario_path, opts).and_then(|(scenario, warnings)| {
        for w in warnings {
            eprintln!("warning: {w}");
        }
        run_scenario(command, &scenario, opts)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.render());
            if outcome.passed {
                EXIT_OK
            } else {
                eprintln!("{}: gate failed", command.name());
                EXIT_GATE_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

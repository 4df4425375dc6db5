use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mftbohm_cli::{run, Command, RunOptions};

/// Many-fingered-time Bohmian simulations driven by scenario files.
#[derive(Parser, Debug)]
#[command(name = "mftbohm", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory [default: scenario output_dir, else ./out]
    #[arg(long)]
    out: Option<PathBuf>,

    /// Overrides the sampler seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Also write a gnuplot script per CSV.
    #[arg(long)]
    plots: bool,

    /// Worker threads; 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
        plots: args.plots,
        threads: args.threads,
        command_line: std::env::args().collect::<Vec<_>>().join(" "),
    };
    ExitCode::from(run(args.command, &args.scenario, &opts) as u8)
}

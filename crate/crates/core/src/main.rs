use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trps_precoding::experiment::{run_to_dir, RunOptions, Scenario};

/// Runs an energy-efficiency sweep described by a scenario file and writes
/// `<name>.csv` plus `<name>_plot.py` into the output directory.
#[derive(Debug, Parser)]
#[command(name = "trps-sweep", version)]
struct Args {
    /// Scenario file (flat TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// 12 x 12 array, 9 users, 9 RF chains.
    #[arg(long)]
    paper_scale: bool,
    /// Adds a Monte Carlo ergodic-rate estimate to every row.
    #[arg(long)]
    mc_validate: bool,
    /// Writes zero wall times so reruns produce identical bytes.
    #[arg(long)]
    no_timing: bool,
}

fn run(args: &Args) -> trps_precoding::Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if args.paper_scale {
        scenario = scenario.paper_scale();
    }
    let opts = RunOptions {
        mc_validate: args.mc_validate,
        zero_timing: args.no_timing,
    };
    let rows = run_to_dir(&scenario, &args.out, opts)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    eprintln!(
        "{}: {} rows written to {} ({} failed)",
        scenario.name,
        rows.len(),
        args.out.display(),
        failed
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("error: code={} message={:?}", e.code(), e.to_string());
            ExitCode::FAILURE
        }
    }
}

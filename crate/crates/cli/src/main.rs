use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wavescope_cli::{load_config, run_experiment, CliError, CommandKind, Overrides};

/// Run a wavescope experiment from a JSON config and write its artifacts.
#[derive(Debug, Parser)]
#[command(name = "wavescope", version)]
struct Args {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: CommandKind,
    /// Versioned JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output.dir` from the config, else `wavescope-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiply every grid resolution by N (ray steps are divided by N).
    #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=64))]
    grid_refine: u32,
    /// Override the config seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Tighten checks: unreliable convergence orders count as failures.
    #[arg(long)]
    strict: bool,
}

fn run(args: &Args) -> Result<bool, CliError> {
    let overrides = Overrides {
        grid_refine: args.grid_refine as usize,
        seed: args.seed,
        strict: args.strict,
    };
    let config = load_config(args.command, &args.config, overrides)?;
    let report = run_experiment(&config)?;
    let dir = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("wavescope-out"));
    let written = report.emit(&dir)?;
    let total = report.assertions.len();
    let failed = report.failures().count();
    for a in report.failures() {
        eprintln!("assertion failed: {} = {} (required {} {})", a.name, a.value, a.comparison, a.limit);
    }
    println!(
        "wavescope {}: {} ({}/{} assertions passed), {} files in {}",
        report.command,
        if report.passed() { "PASS" } else { "FAIL" },
        total - failed,
        total,
        written.len(),
        dir.display()
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

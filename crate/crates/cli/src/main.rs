use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use coopmine::{load_config, run_scenario, RunOptions};

/// Solve, simulate and sweep the cooperative mining model.
#[derive(Parser)]
#[command(name = "coopmine", version)]
struct Args {
    /// Run file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the run file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let options = RunOptions { out: args.out, seed: args.seed, threads: args.threads };
    let result = load_config(&args.config).and_then(|config| run_scenario(&config, &options));
    match result {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use blocksparse::monte_carlo::default_parallelism;
use blocksparse::sweep::{parse_config, run_sweep, Overrides};

/// Sweep the MMSE of block-sparse Gaussian-mixture recovery: large-system
/// theory next to Monte Carlo runs of the exact and support-aware estimators.
#[derive(Debug, Parser)]
#[command(name = "blocksparse", version)]
struct Cli {
    /// TOML file with [system], [sweep] and [output] sections
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,

    /// Worker threads (default: available cores, capped by BLOCKSPARSE_THREADS)
    #[arg(long, short = 'j')]
    threads: Option<usize>,

    #[command(flatten)]
    overrides: Overrides,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match parse_config(cli.config.as_deref(), &cli.overrides) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = cli.threads.unwrap_or_else(default_parallelism).max(1);

    let outcome = match run_sweep(&spec, threads) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };

    println!(
        "{:>8} {:>12} {:>6} {:>13} {:>13} {:>11} {:>13}  status",
        "axis", "value", "m", "theory", "mmse", "ci95", "genie"
    );
    for row in &outcome.rows {
        println!(
            "{:>8} {:>12.6e} {:>6} {:>13} {:>13} {:>11} {:>13}  {}",
            row.axis,
            row.value,
            row.m,
            fmt_opt(row.mse_theory),
            fmt_opt(row.mse_mc_mmse),
            fmt_opt(row.ci95_mmse),
            fmt_opt(row.mse_mc_genie),
            row.status
        );
    }
    println!("wrote {}", outcome.path.display());

    if outcome.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

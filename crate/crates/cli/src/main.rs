use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;
mod scenario_file;

/// Active queue management simulator: drop-tail, RED, gentle RED and FN.
#[derive(Parser, Debug)]
#[command(name = "aqmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and write queue_trace, decisions, flows,
    /// intervals and summary CSVs.
    Run {
        scenario: PathBuf,
        /// Output directory (defaults to the scenario's output_dir).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare direct and uniformized intermarking intervals against their
    /// closed-form laws.
    Distcheck {
        /// Comma-separated marking probabilities in (0, 1].
        #[arg(short = 'p', long = "probabilities", value_delimiter = ',', required = true, value_parser = parse_probability)]
        probabilities: Vec<f64>,
        /// Intervals to draw per probability and mode.
        #[arg(short = 'n', long = "intervals", value_parser = clap::value_parser!(u64).range(1..))]
        intervals: u64,
        /// Falls back to AQMLAB_SEED, then 1.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Re-run a scenario once per value of one parameter and write sweep.csv.
    Sweep {
        scenario: PathBuf,
        /// Dotted path into the scenario file, e.g. `sources[0].rate_bps`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        values: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{s:?} is not a number"))?;
    if p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(format!("{p} is outside (0, 1]"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, output } => commands::run(&scenario, output),
        Command::Distcheck {
            probabilities,
            intervals,
            seed,
            output,
        } => scenario_file::seed_override().and_then(|env| {
            let seed = seed.or(env).unwrap_or(1);
            let n = usize::try_from(intervals)?;
            commands::distcheck(&probabilities, n, seed, &output)
        }),
        Command::Sweep {
            scenario,
            param,
            values,
            output,
        } => commands::sweep(&scenario, &param, &values, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

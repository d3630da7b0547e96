use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use qipp_core::stats::Alternative;
use qipp_harness::{
    apply_preset, parse_pairs, preset, render, report, run_sweep, write_outputs, HarnessError,
    ResultsTable, Result, SweepSpec,
};

#[derive(Parser)]
#[command(name = "qipp", version, about = "Multirobot quantile estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write results.csv.
    Run {
        /// Sweep configuration (JSON). Optional when a preset is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named study overriding the sweep axes.
        #[arg(long)]
        preset: Option<String>,
        /// Use seeds 0..k instead of the configured list.
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write one JSON file per trial.
        #[arg(long)]
        save_trials: bool,
    },
    /// Summarize a results table and test paired groups.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        group_by: String,
        /// Comma separated `a:b` pairs of group labels.
        #[arg(long, default_value = "")]
        pairs: String,
        /// less, greater or two_sided, about rmse(a) - rmse(b).
        #[arg(long, default_value = "greater")]
        alternative: String,
        /// Output directory (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a saved trial's paths over its field.
    Render {
        #[arg(long)]
        trial: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            preset: preset_name,
            seeds,
            workers,
            out,
            save_trials,
        } => {
            let mut spec = match (&config, &preset_name) {
                (Some(path), _) => SweepSpec::from_json_file(path)?,
                (None, Some(name)) => preset(name, seeds.unwrap_or(10))?,
                (None, None) => {
                    return Err(HarnessError::Validation(
                        "either --config or --preset is required".into(),
                    ))
                }
            };
            if let (Some(_), Some(name)) = (&config, &preset_name) {
                apply_preset(&mut spec, name)?;
            }
            if let Some(k) = seeds {
                spec.seeds = (0..k as u64).collect();
            }
            let workers = workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            });
            let output = run_sweep(&spec, workers, save_trials)?;
            write_outputs(&spec, &output, &out)?;
            info!(
                "{} rows written to {}",
                output.table.rows.len(),
                out.join("results.csv").display()
            );
            if !output.aborted.is_empty() {
                error!("{} configs aborted, see errors.log", output.aborted.len());
            }
            Ok(())
        }
        Command::Report {
            input,
            group_by,
            pairs,
            alternative,
            out,
        } => {
            let table = ResultsTable::read_csv(&input)?;
            let alternative: Alternative = alternative.parse()?;
            let r = report(&table, &group_by, &parse_pairs(&pairs)?, alternative)?;
            let dir = out.unwrap_or_else(|| {
                input
                    .parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            r.write(&dir)?;
            for p in &r.pairs {
                println!("{}:{} n={} W={} p={:.4} {}", p.a, p.b, p.n, p.statistic, p.p_value, p.band);
            }
            Ok(())
        }
        Command::Render { trial, field, out } => render(trial, field, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

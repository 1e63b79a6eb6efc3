//! `crsma`: run Monte-Carlo sweeps of the uplink C-RSMA simulator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 every trial infeasible.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crsma_core::experiment::{
    emit, run_plan, to_csv, to_json, ExperimentPlan, OutputFormat, ResultTable, Sweep,
};
use crsma_core::Error;

#[derive(Debug, Parser)]
#[command(name = "crsma", version, about = "Uplink C-RSMA simulation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment manifest and emit one row per (value, trial, scheme).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Sweep override, `axis=lo:step:hi` or `axis=v1,v2`.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output file; rows go to stdout when neither this nor the manifest names one.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Parse and check a manifest without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Validate { config } => match ExperimentPlan::load(&config) {
            Ok(plan) => {
                println!(
                    "ok: {} trial(s), {} sweep value(s) on {}",
                    plan.trials,
                    plan.sweep.values.len(),
                    plan.sweep.axis
                );
                ExitCode::SUCCESS
            }
            Err(e) => config_error(&e),
        },
        Command::Run {
            config,
            sweep,
            trials,
            out,
            format,
        } => {
            let plan = match build_plan(config, sweep, trials, out, format) {
                Ok(plan) => plan,
                Err(e) => return config_error(&e),
            };
            let table = match run_plan(&plan) {
                Ok(t) => t,
                Err(e) => return config_error(&e),
            };
            if let Err(e) = write_rows(&plan, &table) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            print_summary(&table);
            if table.all_infeasible() {
                eprintln!("every trial was infeasible");
                return ExitCode::from(EXIT_ALL_INFEASIBLE);
            }
            ExitCode::SUCCESS
        }
    }
}

fn config_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

/// Manifest values overridden by command-line flags.
fn build_plan(
    config: PathBuf,
    sweep: Option<String>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> crsma_core::Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(&config)?;
    if let Some(s) = sweep {
        plan.sweep = Sweep::parse(&s)?;
    }
    if let Some(t) = trials {
        plan.trials = t;
    }
    if out.is_some() {
        plan.output = out;
    }
    if let Some(f) = format {
        plan.format = f.parse()?;
    }
    plan.validate()?;
    Ok(plan)
}

fn write_rows(plan: &ExperimentPlan, table: &ResultTable) -> crsma_core::Result<()> {
    match &plan.output {
        Some(path) => emit(table, plan.format, path),
        None => {
            let records = table.records();
            let text = match plan.format {
                OutputFormat::Csv => to_csv(&records)?,
                OutputFormat::Json => to_json(&records)? + "\n",
            };
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_summary(table: &ResultTable) {
    for s in &table.summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "{:>14} {:<24} feasible {:>4}/{:<4} mean {} ± {} iterations {}",
            s.sweep_value.to_string(),
            s.scheme.name(),
            s.feasible,
            s.trials,
            fmt(s.mean_sum_rate),
            fmt(s.ci95),
            fmt(s.mean_iterations),
        );
    }
}

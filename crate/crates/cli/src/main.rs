//! `eventattr`: extreme event attribution from the command line.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eventattr::data::Scenario;

use crate::commands::{Context, SimulateArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::Output;

#[derive(Parser)]
#[command(name = "eventattr", version, about = "Risk ratio attribution of extreme events")]
struct Cli {
    /// Run configuration (TOML). For `simulate`, an optional truth manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for bootstrap resampling and simulation; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for bootstrap replicates and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the point process model to each series.
    Fit {
        /// Series to fit; all configured series by default.
        #[arg(long = "series", value_parser = parse_scenario)]
        series: Vec<Scenario>,
    },
    /// Risk ratio of the configured event.
    Attribute,
    /// Confidence intervals for log2 RR by the configured methods.
    Uncertainty,
    /// Point estimate and LRT lower bound over a list of event probabilities.
    Sensitivity {
        /// Event probabilities; the config list by default.
        #[arg(long = "p", value_delimiter = ',')]
        p_values: Vec<f64>,
    },
    /// Mean residual life tables, fitted CDF curves and AIC comparisons.
    Diagnose,
    /// Write a synthetic study with its analytic truth.
    Simulate(SimulateArgs),
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: eventattr::Error| e.to_string())
}

fn init_threads(threads: Option<usize>) -> CliResult<usize> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = init_threads(cli.threads)?;
    if let Command::Simulate(args) = &cli.command {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("study"));
        let mut out = Output::new(dir)?;
        return commands::simulate(cli.config.as_deref(), args, cli.seed.unwrap_or(0), &mut out);
    }

    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.sync_bootstrap();
    config.validate()?;
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut ctx = Context {
        config,
        out: Output::new(dir)?,
        threads,
    };
    match cli.command {
        Command::Fit { series } => commands::fit(&mut ctx, &series),
        Command::Attribute => commands::attribute(&mut ctx),
        Command::Uncertainty => commands::uncertainty(&mut ctx),
        Command::Sensitivity { p_values } => commands::sensitivity(&mut ctx, &p_values),
        Command::Diagnose => commands::diagnose(&mut ctx),
        Command::Simulate(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

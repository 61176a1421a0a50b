//! Command-line driver: simulate, cross-validate, fit, forecast, evaluate and
//! benchmark, with every stage written to disk under one output directory.

pub mod artifacts;
pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifacts::Run;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ngrc", version, about = "NG-RC, polynomial and Volterra kernel forecasting experiments")]
pub struct Cli {
    /// Config file, or `preset:<name>`.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Output directory; defaults to the config's, then `runs/<name>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate or load the dataset and write the train/test split.
    Simulate,
    /// Grid search over the training data.
    Cv,
    /// Fit the configured estimator, or the search winner.
    Fit,
    /// Forecast the test data with the fitted model.
    Forecast,
    /// Compute the metric report of a forecast.
    Eval {
        /// Reference CSV; evaluated against `--prediction` instead of the forecast stage.
        #[arg(long, requires = "prediction")]
        reference: Option<PathBuf>,
        /// Predicted CSV; requires `--reference`.
        #[arg(long, requires = "reference")]
        prediction: Option<PathBuf>,
    },
    /// Time training, Gram construction and prediction.
    Bench,
    /// List the embedded presets.
    Presets,
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match &cli.command {
        Command::Presets => {
            for name in config::PRESET_NAMES {
                println!("{name}");
            }
            return Ok(());
        }
        Command::Bench => {
            let bench = commands::load_bench_config(cli.config.as_deref(), cli.seed)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs/bench"));
            let rows = commands::bench(&bench, &out)?;
            print!("{}", bench::to_csv(&rows));
            return Ok(());
        }
        _ => {}
    }
    let source = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = commands::load_config(source, cli.seed)?;
    let run = Run::new(config.output_dir(cli.out.as_deref()), &config);
    match &cli.command {
        Command::Simulate => {
            commands::simulate(&run)?;
        }
        Command::Cv => {
            let r = commands::cv(&run)?;
            println!("best {} mse {}", r.best.label(), r.best_mse);
        }
        Command::Fit => {
            let f = commands::fit(&run)?;
            println!("fitted {}", f.spec.label());
        }
        Command::Forecast => {
            let f = commands::forecast(&run)?;
            match &f.truncated {
                Some(t) => println!("forecast stopped at step {}: {}", t.step, t.reason),
                None => println!("forecast {} steps", f.horizon()),
            }
        }
        Command::Eval { reference, prediction } => {
            let r = commands::eval(&run, reference.as_deref(), prediction.as_deref())?;
            println!("{}\n{}", ngrc_core::metrics::MetricReport::csv_header(), r.csv_row());
        }
        Command::Bench | Command::Presets => unreachable!("handled above"),
    }
    log::info!("wrote {}", run.root.display());
    Ok(())
}

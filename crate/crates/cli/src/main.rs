//! `bathy`: synthetic data, hyper-parameter fitting, training, estimation,
//! sampling and benchmarking from one binary.

mod artifacts;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{benchmark, data, estimate, fit, pipeline, train};
use config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "bathy", version, about = "Bathymetry estimation from sparse measurements")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic base survey fields.
    MakeBaseSurveys(data::SurveysArgs),
    /// Generate a training dataset from base surveys.
    Generate(data::GenerateArgs),
    /// Select the prior and noise scalings by evidence maximization.
    FitGp(fit::FitArgs),
    /// Train the posterior-mean network.
    Train(train::TrainArgs),
    /// Estimate a field from one observation file.
    Estimate(estimate::EstimateArgs),
    /// Draw conditional realizations for one observation file.
    Sample(estimate::SampleArgs),
    /// Compare methods on held-out surveys.
    Benchmark(benchmark::BenchArgs),
    /// Run every stage end to end.
    Pipeline(pipeline::PipelineArgs),
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::MakeBaseSurveys(a) => data::make_base_surveys_cmd(&a.resolve()?),
        Command::Generate(a) => data::generate_cmd(&a.resolve()?),
        Command::FitGp(a) => fit::fit_gp_cmd(&a.resolve()?).map(|_| ()),
        Command::Train(a) => train::train_cmd(&a.resolve()?),
        Command::Estimate(a) => estimate::estimate_cmd(&a.resolve()?),
        Command::Sample(a) => estimate::sample_cmd(&a.resolve()?),
        Command::Benchmark(a) => benchmark::benchmark_cmd(&a.resolve()?).map(|_| ()),
        Command::Pipeline(a) => pipeline::pipeline_cmd(&a.resolve()?),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<bathy_core::Error>(),
                Some(bathy_core::Error::Config(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

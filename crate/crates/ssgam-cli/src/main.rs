use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssgam_cli::commands::{self, FitFlags};
use ssgam_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "ssgam",
    about = "Bayesian additive models with spike-and-slab term selection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model described by a TOML config and write all artifacts.
    Fit {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit one effect file per term instead of cumulating terms per
        /// covariate combination.
        #[arg(long)]
        separate_effects: bool,
        /// Also predict on this CSV after fitting.
        #[arg(long)]
        predict: Option<PathBuf>,
    },
    /// Predict from a stored fit archive without re-running MCMC.
    Predict {
        /// Directory holding fit.json and samples.csv.
        #[arg(long)]
        fit: PathBuf,
        /// New data CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output CSV path (default: <fit>/predictions.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute summary artifacts from a stored fit archive.
    Summarize {
        /// Directory holding fit.json and samples.csv.
        #[arg(long)]
        fit: PathBuf,
        /// Output directory (default: the fit directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            config,
            out,
            seed,
            separate_effects,
            predict,
        } => RunConfig::from_file(&config).and_then(|cfg| {
            commands::fit_command(
                &cfg,
                &FitFlags {
                    out,
                    seed,
                    separate_effects,
                    predict,
                },
            )
            .map(|dir| println!("artifacts written to {}", dir.display()))
        }),
        Command::Predict { fit, data, out } => {
            commands::predict_command(&fit, &data, out.as_deref())
                .map(|path| println!("predictions written to {}", path.display()))
        }
        Command::Summarize { fit, out } => commands::summarize_command(&fit, out.as_deref())
            .map(|dir| println!("summaries written to {}", dir.display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

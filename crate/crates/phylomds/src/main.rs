//! `phylomds`: Bayesian multidimensional scaling with phylogenetic tree
//! priors, parallel likelihood engines, and cross-validated dimension
//! selection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phylomds::app::{
    cmd_benchmark, cmd_cv, cmd_effective_distance, cmd_fit, cmd_simulate, BenchmarkArgs,
    EffectiveDistanceArgs, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "phylomds",
    version,
    about = "Bayesian multidimensional scaling under phylogenetic diffusion priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw latent locations along the configured trees and write a
    /// synthetic distance matrix with its ground truth.
    Simulate {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the sampler on a distance matrix and write trace, snapshots,
    /// location summaries, and metadata.
    Fit {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
    },
    /// K-fold cross-validation over candidate latent dimensions.
    Cv {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
        /// Number of folds
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Candidate dimensions, comma separated (e.g. 2,3,4)
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
    },
    /// Time the evaluation engines on synthetic data and write a CSV report.
    Benchmark {
        /// Item counts, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Latent dimensions, comma separated
        #[arg(long, value_delimiter = ',', default_value = "2")]
        dims: Vec<usize>,
        /// Engine specs `backend[:threads]`, comma separated
        /// (e.g. serial,vectorized,threaded:4)
        #[arg(long, value_delimiter = ',', default_value = "serial")]
        engines: Vec<String>,
        /// Timed evaluations per measurement
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Lane width for vectorized backends
        #[arg(long, default_value_t = 4)]
        lane_width: usize,
        /// Tile edge for the tiled backend (default: per-operation choice)
        #[arg(long)]
        tile_size: Option<usize>,
        /// Device target for the tiled backend: emulated or native
        #[arg(long, default_value = "emulated")]
        device: String,
        /// Seed for the synthetic instances
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Report CSV path
        #[arg(long)]
        output: PathBuf,
    },
    /// Convert a travel-probability edge list into a symmetric
    /// effective-distance matrix.
    EffectiveDistance {
        /// Edge CSV with header from,to,probability
        #[arg(long)]
        edges: PathBuf,
        /// Optional node-to-group CSV with header node,group
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Output distance CSV path
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> phylomds::Result<String> {
    match cli.command {
        Command::Simulate { config } => {
            let (cfg, text) = RunConfig::load(&config)?;
            cmd_simulate(&cfg, &text)
        }
        Command::Fit { config } => {
            let (cfg, text) = RunConfig::load(&config)?;
            cmd_fit(&cfg, &text)
        }
        Command::Cv {
            config,
            folds,
            dims,
        } => {
            let (cfg, text) = RunConfig::load(&config)?;
            cmd_cv(&cfg, &text, folds, &dims)
        }
        Command::Benchmark {
            sizes,
            dims,
            engines,
            repeats,
            lane_width,
            tile_size,
            device,
            seed,
            output,
        } => cmd_benchmark(&BenchmarkArgs {
            sizes,
            dims,
            engines,
            repeats,
            lane_width,
            tile_size,
            device,
            seed,
            output,
        }),
        Command::EffectiveDistance {
            edges,
            groups,
            output,
        } => cmd_effective_distance(&EffectiveDistanceArgs {
            edges,
            groups,
            output,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

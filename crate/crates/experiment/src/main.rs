use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spin_thimble_experiment::config::{preset, ExperimentConfig, PRESETS};
use spin_thimble_experiment::report::render;
use spin_thimble_experiment::run::{exact_spectrum, read_csv, run, THREADS_ENV};

/// Lefschetz-thimble and comparison Monte Carlo sweeps for spin systems.
#[derive(Parser)]
#[command(name = "spin-thimble", version, after_help = format!("Worker threads: set {THREADS_ENV}."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in experiment (single-spin40, frustrated-triplet).
    #[arg(long)]
    preset: Option<String>,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        match (&self.preset, &self.config) {
            (Some(name), _) => preset(name),
            (_, Some(path)) => ExperimentConfig::load(path),
            _ => anyhow::bail!("pass --preset or --config"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print exact thermal energies on the experiment's β grid as CSV.
    Exact {
        #[command(flatten)]
        source: Source,
    },
    /// Run the full sweep, writing the CSV and its manifest.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the output CSV path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a results CSV over repetitions.
    Report { csv: PathBuf },
    /// Print an experiment as TOML, ready to edit and pass to --config.
    ShowConfig {
        #[command(flatten)]
        source: Source,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Exact { source } => {
            let config = source.load()?;
            let spectrum = exact_spectrum(&config)?;
            println!("beta,energy");
            for &beta in &config.betas {
                println!("{beta},{}", spectrum.thermal_energy(beta)?);
            }
        }
        Command::Run { source, output, seed } => {
            let mut config = source.load()?;
            if let Some(output) = output {
                config.output = output;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let out = run(&config)?;
            print!("{}", render(&out.rows));
            eprintln!(
                "wrote {} and {} in {:.1} s",
                out.csv_path.display(),
                out.manifest_path.display(),
                out.manifest.total_wall_ms as f64 / 1000.0
            );
        }
        Command::Report { csv } => {
            let rows = read_csv(&csv)?;
            anyhow::ensure!(!rows.is_empty(), "{} has no rows", csv.display());
            print!("{}", render(&rows));
        }
        Command::ShowConfig { source } => {
            let config = source.load().with_context(|| format!("presets: {}", PRESETS.join(", ")))?;
            print!("{}", config.to_toml());
        }
    }
    Ok(())
}

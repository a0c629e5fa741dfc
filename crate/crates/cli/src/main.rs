//! Experiment runner for the sequential dispersing billiard laboratory.

mod config;
mod runner;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sinai",
    about = "Sequential dispersing billiards: invariant suite and experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML). Defaults to the bundled one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Skip admissibility checks (logged).
    #[arg(long, global = true, default_value_t = false)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite on the configured table.
    Selftest,
    /// Loss-of-memory decay experiment.
    Decay,
    /// Equidistribution variant of the decay experiment.
    Equi,
    /// Cone-membership report for a density.
    ConeCheck,
    /// Escape-rate experiment for an open system.
    Escape,
    /// Boxed chaotic scattering with lazy gates.
    Scatter,
    /// Random Lorentz gas walk experiments.
    Lorentz,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Selftest => "selftest",
            Command::Decay => "decay",
            Command::Equi => "equi",
            Command::ConeCheck => "cone-check",
            Command::Escape => "escape",
            Command::Scatter => "scatter",
            Command::Lorentz => "lorentz",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!("warning: could not set worker count: {e}");
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("experiment completed with failing checks");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            // Materialize the bundled experiment config beside the outputs
            // so the manifest hash refers to a real file.
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("experiment.toml");
            if !path.exists() {
                std::fs::write(&path, config::BUNDLED_EXPERIMENT)?;
            }
            path
        }
    };
    runner::dispatch(
        cli.command.name(),
        &config_path,
        cli.seed,
        cli.out.clone(),
        cli.force,
    )
}

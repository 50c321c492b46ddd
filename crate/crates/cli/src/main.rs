//! `nbm`: synthesize or ingest SCADA data, train the normal-behaviour models,
//! run the fault-injection experiment and summarize it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nbm_core::config::RunConfig;
use nbm_core::pipeline::{self, Artifacts};
use nbm_core::Error;

#[derive(Parser)]
#[command(name = "nbm", version, about = "Gear-bearing fault detection with SCADA normal-behaviour models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured SCADA series as CSV.
    Synth(CommonArgs),
    /// Train the single- and multi-target models.
    Train(CommonArgs),
    /// Run the fault-injection grid with trained models.
    Evaluate(CommonArgs),
    /// Print summary tables of an existing report.
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML). Without it, defaults are used and --seed is required.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<(RunConfig, Artifacts), Error> {
        let mut cfg = match (&self.config, self.seed) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(seed)) => RunConfig::with_seed(seed),
            (None, None) => {
                return Err(Error::InvalidArgument("give --config or --seed".into()));
            }
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| Error::InvalidArgument("no output directory: give --out or set output_dir".into()))?;
        Ok((cfg, Artifacts::new(dir)))
    }

    /// The output directory alone; `report` needs no seed.
    fn out_dir(&self) -> Result<Artifacts, Error> {
        if let Some(dir) = &self.out {
            return Ok(Artifacts::new(dir));
        }
        if let Some(path) = &self.config {
            if let Some(dir) = RunConfig::load(path)?.output_dir {
                return Ok(Artifacts::new(dir));
            }
        }
        Err(Error::InvalidArgument("no output directory: give --out or set output_dir".into()))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(a) => {
            let (cfg, out) = a.resolve()?;
            let path = pipeline::cmd_synth(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train(a) => {
            let (cfg, out) = a.resolve()?;
            let metrics = pipeline::with_jobs(a.jobs, || pipeline::cmd_train(&cfg, &out))??;
            for m in &metrics.models {
                for t in &m.targets {
                    println!(
                        "{:<13} {:<9} held-out RMSE {:.5} ({:.3} physical)  MAE {:.5} ({:.3} physical)",
                        m.model_kind.name(),
                        t.channel.column(),
                        t.rmse,
                        t.rmse_physical,
                        t.mae,
                        t.mae_physical
                    );
                }
            }
            println!("models written to {}", out.dir.display());
        }
        Command::Evaluate(a) => {
            let (cfg, out) = a.resolve()?;
            let report = pipeline::with_jobs(a.jobs, || pipeline::cmd_evaluate(&cfg, &out))??;
            print!("{}", pipeline::render_report(&report));
            println!("\nreport written to {}", out.report().display());
        }
        Command::Report(a) => {
            let out = a.out_dir()?;
            print!("{}", pipeline::cmd_report(&out.report())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

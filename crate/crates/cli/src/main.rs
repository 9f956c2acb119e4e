use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use star_sim::config::ExperimentConfig;
use star_sim::{Outcome, Overrides, WriteOptions};

/// Monte-Carlo simulator for STAR-RIS beamforming.
#[derive(Parser)]
#[command(name = "star-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment.
    Run(RunArgs),
    /// Run the `sweep` section of the config.
    Sweep(RunArgs),
    /// Check a config file and exit.
    Validate { config: PathBuf },
    /// Print the default config as JSON.
    PrintDefaults,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults are used for absent keys.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write trace.csv.
    #[arg(long)]
    trace: bool,
    /// Omit the timestamp and wall times so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, WriteOptions)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            seed: self.seed,
            trials: self.trials,
            out_dir: self.out_dir.clone(),
        }
        .apply(&mut cfg);
        cfg.resolve()?;
        let opts = WriteOptions {
            trace: self.trace,
            no_timestamp: self.no_timestamp,
        };
        Ok((cfg, opts))
    }
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let finish = |(outcome, files): (Outcome, Vec<PathBuf>)| {
        for f in files {
            println!("{}", f.display());
        }
        if outcome == Outcome::AllInfeasible {
            eprintln!("every trial was infeasible");
        }
        outcome
    };
    match cli.command {
        Command::Run(args) => {
            let (cfg, opts) = args.load()?;
            star_sim::run(&cfg, &opts).map(finish)
        }
        Command::Sweep(args) => {
            let (cfg, opts) = args.load()?;
            star_sim::sweep(&cfg, &opts).map(finish)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = cfg.resolve()?;
            println!(
                "{}: ok ({} trials, {} elements, {} solver)",
                config.display(),
                cfg.trials,
                r.scenario.layout.elements(),
                r.solver.name()
            );
            Ok(Outcome::Success)
        }
        Command::PrintDefaults => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

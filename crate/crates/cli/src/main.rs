use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{Failure, Format, Output};
use config::{Command, DataSpec};
use gvi_core::GaussianMeasure;

/// Generalized variational inference: posteriors, the R*_n region and
/// concentration experiments.
#[derive(Parser)]
#[command(name = "gvi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the GVI posterior of one dataset.
    #[command(after_help = config::key_help())]
    Solve(RunArgs),
    /// Describe the R*_n region and check the posterior against it.
    #[command(after_help = config::key_help())]
    Region(RunArgs),
    /// Posterior mass of shrinking neighbourhoods of the loss minimiser.
    #[command(after_help = config::key_help())]
    Rates(RunArgs),
    /// Posterior mass of a region away from the loss minimiser.
    #[command(after_help = config::key_help())]
    Concentrate(RunArgs),
    /// Bayes and GVI posteriors as the prior moves away from the data.
    #[command(after_help = config::key_help())]
    Compare(RunArgs),
    /// Rates under n-dependent bound and learning-rate schedules.
    #[command(after_help = config::key_help())]
    Schedule(RunArgs),
    /// Concentration under the unbounded KL divergence.
    #[command(after_help = config::key_help())]
    Unbounded(RunArgs),
    /// Divergence utilities.
    Divergence(DivArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    config: PathBuf,
    /// Directory for result files.
    #[arg(short, long, default_value = "out")]
    output_dir: PathBuf,
    /// Replace the configured seeds with this one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct DivArgs {
    /// kl, tv, hellinger, lecam or tv-sqrt-n.
    #[arg(long)]
    kind: String,
    /// Print the supremum of the divergence over all pairs of measures.
    #[arg(long)]
    check_bound: bool,
    /// First Gaussian as MEAN,VARIANCE.
    #[arg(long, value_parser = commands::parse_gaussian, requires = "p")]
    q: Option<GaussianMeasure>,
    /// Second Gaussian as MEAN,VARIANCE.
    #[arg(long, value_parser = commands::parse_gaussian, requires = "q")]
    p: Option<GaussianMeasure>,
}

fn run_config(command: Command, args: RunArgs) -> Result<(), Failure> {
    let mut cfg = config::load(&args.config, command).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        match (&mut cfg.data, &mut cfg.experiment) {
            (Some(DataSpec::Simulate { seed: s, .. }), _) => *s = seed,
            (_, Some(e)) => e.seeds = vec![seed],
            _ => return Err(Failure::Config("--seed needs simulated data or an experiment".into())),
        }
    }
    let out = Output::new(args.output_dir, args.format, &cfg)?;
    commands::run(command, &cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Solve(a) => run_config(Command::Solve, a),
        Cmd::Region(a) => run_config(Command::Region, a),
        Cmd::Rates(a) => run_config(Command::Rates, a),
        Cmd::Concentrate(a) => run_config(Command::Concentrate, a),
        Cmd::Compare(a) => run_config(Command::Compare, a),
        Cmd::Schedule(a) => run_config(Command::Schedule, a),
        Cmd::Unbounded(a) => run_config(Command::Unbounded, a),
        Cmd::Divergence(a) => {
            if !a.check_bound && a.q.is_none() {
                Err(Failure::Config("nothing to do: pass --check-bound or --q and --p".into()))
            } else {
                commands::divergence(&a.kind, a.check_bound, a.q.zip(a.p))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            for line in e.to_string().lines() {
                eprintln!("error: {line}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

//! `lbno`: simulate, build datasets, train, roll out, evaluate and verify.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numeric failure or
//! divergence, 4 invariant failure, 5 I/O or file-format error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbno::Error;

use commands::Out;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "lbno", version, about = "Lattice Boltzmann simulation and neural operator surrogate")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; every file a subcommand writes goes below it.
    #[arg(long, global = true, env = "LBNO_OUT", default_value = "lbno-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write a trajectory file with a JSON sidecar.
    Simulate {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Cut trajectories into jump pairs and write train/val/test files.
    /// Without --trajectory the vortex scenario is generated instead.
    MakeDataset {
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        #[arg(long)]
        jump: Option<u64>,
    },
    /// Train an operator on DIR/train.lbno (validated on DIR/val.lbno).
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Loss weights file {"mse", "mom0", "mom1", "equiv"}.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Autoregressive rollout from the first snapshot of a trajectory.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Single-jump and rollout errors; two or more checkpoints also give an
    /// ensemble report.
    Evaluate {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        /// Held-out dataset for single-jump errors.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        jump: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "run")]
        label: String,
    },
    /// Run the invariant battery; stops at the first failure.
    Verify,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Shape(_) | Error::Symmetry(_) | Error::EmptyDataset => 2,
        Error::Numeric(_) | Error::Stability { .. } | Error::Divergence { .. } => 3,
        Error::Invariant { .. } => 4,
        Error::Io(_)
        | Error::Magic { .. }
        | Error::Version { .. }
        | Error::Truncated(_)
        | Error::Checksum { .. }
        | Error::Format(_) => 5,
    }
}

fn run(cli: Cli) -> lbno::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let seed = cfg.seed.unwrap_or(0);
    if let Command::Verify = cli.command {
        return commands::verify_all();
    }
    let out = Out::create(&cli.out)?;
    match cli.command {
        Command::Simulate { steps, stride, warmup } => {
            commands::simulate(&cfg, seed, &commands::SimulateArgs { steps, stride, warmup }, &out)
        }
        Command::MakeDataset { trajectories, jump } => {
            commands::make_dataset(&cfg, seed, &commands::DatasetArgs { trajectories, jump }, &out)
        }
        Command::Train { data, weights, epochs } => {
            commands::train(&cfg, seed, &commands::TrainArgs { data, weights, epochs }, &out)
        }
        Command::Rollout {
            checkpoint,
            trajectory,
            steps,
        } => commands::rollout(
            &cfg,
            &commands::RolloutArgs {
                checkpoint,
                trajectory,
                steps,
            },
            &out,
        ),
        Command::Evaluate {
            checkpoints,
            trajectories,
            test,
            jump,
            steps,
            label,
        } => commands::evaluate(
            &cfg,
            &commands::EvaluateArgs {
                checkpoints,
                trajectories,
                test,
                jump,
                steps,
                label,
            },
            &out,
        ),
        Command::Verify => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

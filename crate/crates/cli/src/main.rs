mod commands;

use aggcox::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Log-Gaussian Cox process inference from aggregated regional counts.
#[derive(Parser)]
#[command(name = "aggcox", version)]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or reuse) the cached cell partition and check the inputs.
    Prepare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the sampler and write the chain.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint every this many iterations.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Exceedance maps, posterior means and predictive count draws.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic dataset to the configured input paths.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate predictive draws onto a new partition.
    Aggregate {
        #[arg(long)]
        config: PathBuf,
        /// New partition, overriding the configured one.
        #[arg(long)]
        regions: Option<PathBuf>,
        /// Competing process as NAME=PREDICTIVE_JSON (repeatable).
        #[arg(long = "process", value_parser = parse_process)]
        processes: Vec<(String, PathBuf)>,
    },
}

fn parse_process(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), path.into()))
        }
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("AGGCOX_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "AGGCOX_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("cannot size the thread pool: {e}")))
}

fn exit_code(e: &Error) -> u8 {
    let missing_input =
        matches!(e, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound);
    if e.is_input_error() || missing_input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let result = init_threads().and_then(|_| match cli.command {
        Command::Prepare { config } => commands::prepare(&config, cli.seed),
        Command::Fit {
            config,
            checkpoint_every,
            resume,
        } => commands::fit(&config, cli.seed, checkpoint_every, resume),
        Command::Predict { config } => commands::predict(&config, cli.seed),
        Command::Simulate { config } => commands::simulate(&config, cli.seed),
        Command::Aggregate {
            config,
            regions,
            processes,
        } => commands::aggregate(&config, cli.seed, regions, processes),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let report = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": code }
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}

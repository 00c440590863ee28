use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gea::{parse_config, run_experiment, sweep, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "gea", version, about = "Networked Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every replication of one config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one deep-sea config at several depths.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        depths: Vec<usize>,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let opts = RunOptions { out: cli.global.out, seed: cli.global.seed, threads: cli.global.threads };
    match cli.command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let summary = run_experiment(&cfg, &opts)?;
            println!("{}", summary.directory.display());
        }
        Command::Sweep { config, depths } => {
            let cfg = parse_config(&config)?;
            let summaries = sweep(&cfg, &depths, &opts)?;
            for s in summaries {
                println!("{}", s.directory.display());
            }
        }
        Command::Validate { config } => {
            let cfg = opts.apply(&parse_config(&config)?);
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

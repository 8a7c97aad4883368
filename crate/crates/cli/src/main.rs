use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pricegraph_cli::commands::{execute, Command};
use pricegraph_cli::{exit_code, Config};

/// Graph-embedding stock movement prediction pipeline.
#[derive(Parser)]
#[command(name = "pricegraph", version)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, default_value = "pricegraph.toml")]
    config: PathBuf,
    /// Overrides the root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and cache every window's visibility graphs and CI vectors.
    Graph,
    /// Build and cache struc2vec embeddings (and their graphs).
    Embed,
    /// Train a model and write a checkpoint.
    Train,
    /// Evaluate a checkpoint on the validation and test splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Backtest a checkpoint over the test periods.
    Backtest {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline,
    /// Write a synthetic OHLCV corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let mut cfg = if matches!(cli.command, Cmd::Synth { .. }) && !cli.config.exists() {
        Config::default()
    } else {
        Config::load(&cli.config)?
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.cache_dir {
        cfg.cache_dir = d;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(pricegraph_cli::ConfigError::Invalid("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let command = match cli.command {
        Cmd::Graph => Command::Graph,
        Cmd::Embed => Command::Embed,
        Cmd::Train => Command::Train,
        Cmd::Eval { checkpoint } => Command::Eval { checkpoint },
        Cmd::Backtest { checkpoint } => Command::Backtest { checkpoint },
        Cmd::Pipeline => Command::Pipeline,
        Cmd::Synth { out } => Command::Synth { out },
    };
    let outcome = execute(&cfg, &command)?;
    Ok(format!("{}run directory: {}\n", outcome.summary, outcome.run_dir.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

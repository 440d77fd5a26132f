use cec_cli::{cmd_assign, cmd_optimize, cmd_simulate, cmd_verify, load_config};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process;

/// Elastic coded computation: optimal machine loads, row assignment
/// plans, and simulated multi-step runs over an MDS-coded data matrix.
#[derive(Parser)]
#[command(name = "cec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal per-machine load split for every event
    Optimize(CommonArgs),
    /// Write one assignment plan file per event (plan_t{t}.json)
    Assign(CommonArgs),
    /// Execute the timeline; write steps.csv and summary.json
    Simulate(CommonArgs),
    /// Check previously written plan files against the configuration
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; falls back to the config's out_dir, then "out"
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed override for simulate
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Optimize(a) | Command::Assign(a) | Command::Simulate(a) | Command::Verify(a) => a,
    };
    let outcome = load_config(&args.config).and_then(|config| {
        let out_dir = args
            .out
            .clone()
            .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        match &cli.command {
            Command::Optimize(_) => cmd_optimize(&config),
            Command::Assign(_) => cmd_assign(&config, &out_dir),
            Command::Simulate(_) => cmd_simulate(&config, &out_dir, args.seed),
            Command::Verify(_) => cmd_verify(&config, &out_dir),
        }
    });
    match outcome {
        Ok(text) => print!("{text}"),
        Err(err) => {
            if let Some(text) = &err.stdout {
                print!("{text}");
            }
            eprintln!("{}", err.to_json());
            process::exit(err.code);
        }
    }
}

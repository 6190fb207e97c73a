use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nonlocal_flow::experiment::{
    cmd_compare, cmd_converge, cmd_simulate, exit_code, CommandError, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "nonlocal-flow",
    version,
    about = "Nonlocal conservation law experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Args {
    config: PathBuf,
    /// Concurrent runs (defaults to the number of cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every spec and write trajectories, heatmaps and reports
    Simulate(Args),
    /// Sweep the kernel reach and tabulate L1 errors against a reference
    Converge(Args),
    /// Overlay several runs at one time and track their monotonicity
    Compare(Args),
}

type Cmd = fn(&ExperimentConfig, &Path, usize) -> Result<bool, CommandError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (run, args): (Cmd, Args) = match cli.command {
        Command::Simulate(a) => (cmd_simulate, a),
        Command::Converge(a) => (cmd_converge, a),
        Command::Compare(a) => (cmd_compare, a),
    };
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let threads = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run(&cfg, &out, threads);
    match &result {
        Ok(true) => {}
        Ok(false) => eprintln!("one or more verdicts failed"),
        Err(e) => eprintln!("{e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}

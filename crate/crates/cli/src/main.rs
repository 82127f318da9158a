//! `rwm`: simulations, sweeps, solver benchmark and certification.
//!
//! Exit codes: 0 success/stable, 2 unstable run or failed verification,
//! 1 any error (bad config, I/O, numerical failure).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rwm_mpc::fgm::Width;
use rwm_mpc::sim::ControllerKind;

#[derive(Parser, Debug)]
#[command(name = "rwm", version, about = "RWM feedback: MPC/LQG closed-loop simulation and FGM benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// mpc, lqg or lqg-ewp.
    #[arg(long, global = true)]
    pub controller: Option<ControllerKind>,
    /// Comma-separated FGM iteration counts; commands needing one count use
    /// the first.
    #[arg(long, global = true, value_delimiter = ',')]
    pub iters: Option<Vec<usize>>,
    /// wide or narrow.
    #[arg(long, global = true)]
    pub width: Option<Width>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One closed-loop run; writes trace.csv.
    Simulate,
    /// Grid of initial unstable-mode values; writes bap.csv.
    SweepBap,
    /// Grid of growth rates and rotation frequencies; writes robustness.csv.
    SweepRobustness,
    /// FGM timing/accuracy table on recorded QPs; writes bench.csv.
    Bench,
    /// Per-sample FGM accuracy against the oracle; writes verify.csv.
    Verify,
    /// Builds the control-oriented model and controller; writes
    /// control_model.txt.
    ReduceModel,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::load(&cli.common).and_then(|cfg| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::SweepBap => commands::sweep_bap(&cfg),
        Command::SweepRobustness => commands::sweep_robustness(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::ReduceModel => commands::reduce_model(&cfg),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

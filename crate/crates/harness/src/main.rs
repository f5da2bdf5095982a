use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ermrer_harness::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "ermrer", version, about = "Gibbs solutions and bounds for relative-entropy-regularized ERM")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Gibbs posterior, log-partition and cumulants for each dataset and λ.
    Gibbs(Common),
    /// Largest λ whose Gibbs solution is (δ, ε)-optimal.
    LambdaSearch(Common),
    /// Sensitivity of deviation measures and its bound.
    Sensitivity(Common),
    /// Risk minimizer over a KL ball around the Gibbs solution.
    ConstrainedMin(Common),
    /// Lautum information and the dataset-averaged bounds.
    Lautum(Common),
    /// Run the verification checks.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output root; results go to `<out>/<subcommand>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Gibbs(c) => (Command::Gibbs, c),
        Cmd::LambdaSearch(c) => (Command::LambdaSearch, c),
        Cmd::Sensitivity(c) => (Command::Sensitivity, c),
        Cmd::ConstrainedMin(c) => (Command::ConstrainedMin, c),
        Cmd::Lautum(c) => (Command::Lautum, c),
        Cmd::Verify(c) => (Command::Verify, c),
    };
    let opts = RunOptions {
        config: common.config,
        out: common.out,
        seed: common.seed,
        jobs: common.jobs,
    };
    match run(command, &opts) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed; see {}", outcome.dir.join("verify.csv").display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

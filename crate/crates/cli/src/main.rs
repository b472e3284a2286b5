use std::path::PathBuf;
use std::process::ExitCode;

use chaosjump::noise::parse_seed;
use chaosjump_cli::{run, Command, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chaosjump", version, about = "Particle systems with common jump noise")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the finite particle system and write trajectories.
    Simulate(Common),
    /// Synchronous coupling at a single population size.
    Couple(Common),
    /// Convergence study over `sim.n_grid` with the Gronwall envelope.
    Study(Common),
    /// Regime-switching simulation.
    Regime(Common),
    /// Numerical checks of the declared model constants.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Decimal or 0x-hex.
    #[arg(long, value_parser = seed)]
    seed_common: Option<u64>,
    #[arg(long, value_parser = seed)]
    seed_idio: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn seed(s: &str) -> Result<u64, String> {
    parse_seed(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { chaosjump_cli::EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Couple(c) => (Command::Couple, c),
        Cmd::Study(c) => (Command::Study, c),
        Cmd::Regime(c) => (Command::Regime, c),
        Cmd::Validate(c) => (Command::Validate, c),
    };
    let opts = RunOptions {
        config: common.config,
        seed_common: common.seed_common,
        seed_idio: common.seed_idio,
        out_dir: common.out_dir,
        threads: common.threads,
    };
    match run(command, &opts) {
        Ok(report) => {
            for m in &report.messages {
                println!("{m}");
            }
            println!("outputs written to {}", report.out_dir.display());
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

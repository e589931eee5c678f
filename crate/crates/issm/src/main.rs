//! Command-line front end. All the work lives in [`issm::commands`]; this
//! binary only parses arguments, prints the files a command produced, and
//! maps errors to exit codes (0 success, 2 config/usage problems, 1
//! anything else).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "issm", version, about = "Budgeted active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the selection agent over the configured seeds.
    Train(RunArgs),
    /// Learn a fast-adapting Q-network initialization.
    Metatune(RunArgs),
    /// Run frozen episodes for every configured method and tabulate them.
    Compare(RunArgs),
    /// Write the configured synthetic dataset to interchange files.
    GenerateData(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML), or a manifest from an earlier run (JSON)
    /// to reproduce it exactly.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Run only this seed instead of the config's list.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Train(a) => ("train", a),
        Command::Metatune(a) => ("metatune", a),
        Command::Compare(a) => ("compare", a),
        Command::GenerateData(a) => ("generate-data", a),
    };
    match issm::commands::run_command(name, &args.config, &args.out, args.seed_override) {
        Ok(outputs) => {
            for file in &outputs {
                println!("{}", args.out.join(file).display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(issm::commands::exit_code(&err) as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mda_bench::commands::{self, Globals};
use mda_bench::Exit;

#[derive(Parser)]
#[command(name = "mda", version, about = "Dual averaging and momentum optimizer benchmarks")]
struct Cli {
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[run] output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured optimizer on every seed.
    Run,
    /// Compare two or more optimizers.
    Compare,
    /// DA, DA with averaging, MDA.
    Ablate,
    /// Run the verification suites.
    Verify,
    /// Fit the convergence rate of MDA over several horizons.
    Rate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Exit::Success,
                _ => Exit::ConfigError,
            }
            .into();
        }
    };
    let g = Globals {
        config: cli.config,
        out: cli.out,
        jobs: cli.jobs,
        seed_offset: cli.seed_offset,
    };
    let outcome = match cli.command {
        Command::Run => commands::cmd_run(&g),
        Command::Compare => commands::cmd_compare(&g),
        Command::Ablate => commands::cmd_ablate(&g),
        Command::Verify => commands::cmd_verify(&g),
        Command::Rate => commands::cmd_rate(&g),
    };
    match outcome {
        Ok(o) => {
            print!("{}", o.report);
            if o.exit != Exit::Success {
                eprintln!("exit {}", o.exit.code());
            }
            o.exit.into()
        }
        Err(e) => {
            eprintln!("mda: {e}");
            e.exit().into()
        }
    }
}

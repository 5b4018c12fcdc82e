use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use horo_cli::{run, Options, SUITES};

/// Numerical laboratory for time-changed horocycle flows on the Bolza surface.
#[derive(Parser)]
#[command(name = "horolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact identities: arc formulas, finite differences, degenerations.
    CheckIdentities(Flags),
    /// Growth of Birkhoff integrals and of the time deviation.
    Equidist(Flags),
    /// Decay of correlations and of coboundary arc averages.
    Mixing(Flags),
    /// Growth of twisted integrals.
    Twisted(Flags),
    /// Spectral density and local dimension of coboundaries.
    Spectrum(Flags),
    /// Every suite in dependency order.
    All(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the planned stages and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    seed_override: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (suites, flags): (&[&str], Flags) = match cli.command {
        Command::CheckIdentities(f) => (&["identities"], f),
        Command::Equidist(f) => (&["equidist"], f),
        Command::Mixing(f) => (&["mixing"], f),
        Command::Twisted(f) => (&["twisted"], f),
        Command::Spectrum(f) => (&["spectrum"], f),
        Command::All(f) => (&SUITES, f),
    };
    let opts = Options {
        config: flags.config,
        out: flags.out,
        threads: flags.threads,
        dry_run: flags.dry_run,
        seed_override: flags.seed_override,
    };
    ExitCode::from(run(suites, &opts).status.exit_code() as u8)
}

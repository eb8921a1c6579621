use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levywalk_cli::commands;
use levywalk_cli::manifest::OneOrMany;
use levywalk_cli::{CliResult, Manifest, ManifestFile};

#[derive(Parser)]
#[command(name = "levywalk", version, about = "Quantum walks with power-law distributed step lengths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every grid point of the manifest
    Run(Flags),
    /// Fit scaling forms to the outputs of `run`
    Analyze(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML manifest; flags override its fields
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    /// Step-length exponents
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Step-length cutoffs
    #[arg(long, value_delimiter = ',')]
    lmax: Option<Vec<usize>>,
    #[arg(long)]
    tmax: Option<usize>,
    /// Disorder realizations per grid point
    #[arg(long)]
    configs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coin preset: paper-asymmetric, right-only or left-only
    #[arg(long)]
    coin: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    a0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<usize>>,
    /// Output directory (default: $LEVYWALK_OUT, else ./levywalk-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

impl Flags {
    fn manifest(self) -> CliResult<Manifest> {
        let base = match &self.manifest {
            Some(path) => ManifestFile::load(path)?,
            None => ManifestFile::default(),
        };
        let flags = ManifestFile {
            delta: self.delta.map(OneOrMany::Many),
            lmax: self.lmax.map(OneOrMany::Many),
            t_max: self.tmax,
            n_config: self.configs,
            seed: self.seed,
            coin: self.coin,
            a0: self.a0,
            b0: self.b0,
            snapshots: self.snapshots,
            out: self.out,
            threads: self.threads,
            ..Default::default()
        };
        Manifest::resolve(base.overlay(flags))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(flags) => flags.manifest().and_then(|m| commands::run(&m).map(drop)),
        Command::Analyze(flags) => flags.manifest().and_then(|m| commands::analyze(&m).map(drop)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmmlab::experiments::{run, summarize, Command, ExperimentConfig};
use hmmlab::Error;

/// Reproducible experiments on parametric hidden Markov models.
///
/// Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "hmmlab", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate paths and filter traces.
    Simulate(RunArgs),
    /// Mixing, transportation and Lipschitz constants, plus the tail check.
    Constants(RunArgs),
    /// Coverings, composite tests and their error rates.
    Tests(RunArgs),
    /// Posterior sampling, Fisher information, LAN and BvM diagnostics.
    Posterior(RunArgs),
    /// Merge run manifests into one summary table.
    Report {
        /// Run directories, each holding a manifest.json.
        runs: Vec<PathBuf>,
        /// Summary CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn execute(cli: Cli) -> Result<(), Error> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Constants(a) => (Command::Constants, a),
        Cmd::Tests(a) => (Command::Tests, a),
        Cmd::Posterior(a) => (Command::Posterior, a),
        Cmd::Report { runs, out } => {
            let count = match out {
                Some(path) => {
                    let f = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    summarize(&runs, f)?
                }
                None => summarize(&runs, std::io::stdout().lock())?,
            };
            log::info!("merged {count} manifests");
            return Ok(());
        }
    };
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let manifest = run(command, &config, &args.out)?;
    log::info!("{} wrote {} files to {}", manifest.command, manifest.outputs.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Experiment CLI: preprocess, train, attack, report, sweep.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tabattack::driver::{self, RunConfig};
use tabattack::error::Error;
use tabattack::logging::log_error;
use tabattack::metrics::MdRule;

#[derive(Parser)]
#[command(
    name = "tabattack",
    about = "On-manifold adversarial example generation for tabular data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the dataset seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for per-sample attacks (0 = available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Outlier rule: compare MD (`paper`) or MD² (`squared`) against the
    /// chi-squared threshold.
    #[arg(long, value_parser = parse_md_rule, global = true)]
    md_rule: Option<MdRule>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the CSV, split it, fit the preprocessor, write encodings.
    Preprocess,
    /// Train target classifiers (all configured kinds unless --kind).
    TrainTarget {
        /// Train only this model kind (mlp | sdt).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Train the VAE and fit latent statistics.
    TrainVae,
    /// Run every configured (target, attack) campaign.
    Attack,
    /// Aggregate outcomes into metric tables and latent scatters.
    Report,
    /// Run the configured hyperparameter or sparsity sweep.
    Sweep,
}

fn parse_md_rule(s: &str) -> Result<MdRule, String> {
    match s {
        "paper" => Ok(MdRule::Paper),
        "squared" => Ok(MdRule::Squared),
        other => Err(format!(
            "unknown md-rule `{other}` (expected paper|squared)"
        )),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        config.dataset.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        config.evaluation.threads = threads;
    }
    if let Some(rule) = cli.md_rule {
        config.evaluation.md_rule = rule;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Preprocess => driver::run_preprocess(&config),
        Command::TrainTarget { kind } => driver::run_train_target(&config, kind.as_deref()),
        Command::TrainVae => driver::run_train_vae(&config),
        Command::Attack => driver::run_attack(&config),
        Command::Report => {
            driver::run_report(&config)?;
            Ok(())
        }
        Command::Sweep => driver::run_sweep(&config),
    }
}

/// Exit codes: 0 success (including annotated skips), 1 configuration error,
/// 2 numeric failure, 3 I/O error.
fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_)
        | Error::Schema(_)
        | Error::Json(_)
        | Error::Unsupported(_)
        | Error::Checkpoint(_) => 1,
        Error::Io(_) | Error::Csv(_) | Error::Ingestion { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log_error(&e.to_string());
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

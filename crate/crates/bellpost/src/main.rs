//! Batch experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bellpost::config::{load_config, ExperimentConfig, ExperimentKind};
use bellpost::experiment::run_experiment;

#[derive(Parser)]
#[command(
    name = "bellpost",
    version,
    about = "Seeded experiments on postselection and Bell-CHSH statistics",
    after_help = "Outputs are CSV tables under --out; identical configs and \
                  seeds reproduce identical bytes."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trials per setting pair (or samples, per experiment).
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Output directory for CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Bob's sign convention: true thresholds +n.b (conventional table
    /// signs), false the literal -n.b.
    #[arg(long, global = true)]
    flip_bob: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold-readout source, all events kept: CHSH stays classical.
    Classical,
    /// Same source, null results discarded: CHSH reaches 4.
    ClassicalPostselected,
    /// Exact Werner-state and singlet references: correlations, optimal
    /// CHSH, partial-transpose witness.
    QuantumWerner,
    /// Werner's hidden-variable model vs exact quantum probabilities.
    HvValidate,
    /// A hidden vector whose direct fine value and coarse value disagree,
    /// plus the averaging identity that hides it.
    ParadoxDemo,
    /// Settings search for sequential-measurement CHSH violation, with the
    /// hidden-variable side simulated at every visited configuration.
    PopescuSearch,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Classical => ExperimentKind::Classical,
            Command::ClassicalPostselected => ExperimentKind::ClassicalPostselected,
            Command::QuantumWerner => ExperimentKind::QuantumWerner,
            Command::HvValidate => ExperimentKind::HvValidate,
            Command::ParadoxDemo => ExperimentKind::ParadoxDemo,
            Command::PopescuSearch => ExperimentKind::PopescuSearch,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> bellpost::Result<()> {
    let kind = cli.command.kind();
    let mut config = match &cli.config {
        Some(path) => {
            let mut loaded = load_config(path)?;
            loaded.experiment = kind;
            loaded
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(flip_bob) = cli.flip_bob {
        config.flip_bob = flip_bob;
    }
    config.validate()?;

    println!("experiment: {} (seed {})", config.experiment, config.seed);
    let summary = run_experiment(&config)?;
    for message in &summary.messages {
        println!("{message}");
    }
    for file in &summary.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

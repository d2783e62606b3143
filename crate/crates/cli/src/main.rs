use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use orthowgan_cli::commands::{
    cmd_eval, cmd_plot, cmd_tournament, cmd_train, EvalArgs, EvalKind, PlotArgs, TournamentArgs, TrainArgs,
};
use orthowgan_cli::error::CliError;

#[derive(Parser)]
#[command(name = "orthowgan", version = orthowgan_cli::manifest::BUILD_ID, about = "Train and evaluate WGANs on 2-D synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Lipschitz,
    Gram,
    Spectrum,
    Ndb,
    Gradnorm,
}

impl From<Which> for EvalKind {
    fn from(w: Which) -> Self {
        match w {
            Which::Lipschitz => EvalKind::Lipschitz,
            Which::Gram => EvalKind::Gram,
            Which::Spectrum => EvalKind::Spectrum,
            Which::Ndb => EvalKind::Ndb,
            Which::Gradnorm => EvalKind::Gradnorm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes checkpoint.json, metrics.csv, run_manifest.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Replace the iteration count by a wall-clock budget.
        #[arg(long)]
        budget_seconds: Option<f64>,
    },
    /// Cross-evaluate critics and generators of two or more checkpoints.
    Tournament {
        #[arg(required = true, num_args = 2..)]
        checkpoints: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Config whose dataset keys replace the first checkpoint's dataset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        n_gen: usize,
        #[arg(long, default_value_t = 4096)]
        n_data: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write one diagnostic table for a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// ndb only: use a held-out half of the real data as the generated set.
        #[arg(long)]
        replay_train_half: bool,
    },
    /// Scatter plot of real and generated samples as PNG.
    Plot {
        /// Output PNG file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, out, seed_override, budget_seconds } => {
            let o = cmd_train(&TrainArgs { config, out: out.clone(), seed_override, budget_seconds })?;
            println!("trained {} of {} iterations; artifacts in {}", o.achieved_iters, o.planned_iters, out.display());
        }
        Command::Tournament { checkpoints, out, config, n_gen, n_data, seed } => {
            let r = cmd_tournament(&TournamentArgs { checkpoints, out, config, n_gen, n_data, seed })?;
            for (rank, &i) in r.ranking().iter().enumerate() {
                let a = r.models.iter().position(|&m| m == i).expect("ranked model is included");
                println!("{}. model {i}: s = {}", rank + 1, r.s[a]);
            }
            if !r.excluded.is_empty() {
                println!("excluded: {:?}", r.excluded);
            }
        }
        Command::Eval { checkpoint, which, out, config, seed, n, alpha, replay_train_half } => {
            cmd_eval(&EvalArgs { checkpoint, which: which.into(), out, config, seed, n, alpha, replay_train_half })?;
        }
        Command::Plot { out, checkpoint, samples, real, config, n, seed } => {
            cmd_plot(&PlotArgs { out, checkpoint, samples, real, config, n, seed })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpssgd::config::RunConfig;
use dpssgd::experiment::{self, SweepSpec};
use dpssgd::privacy::{calibrate_sigma, epsilon_for, PrivacyBudget};
use dpssgd::DpError;

/// Differentially private sparse SGD: training runs, sweeps, calibration.
#[derive(Parser)]
#[command(name = "dpssgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (default: $DPSSGD_OUTPUT_DIR, the config's
        /// `output_dir`, or runs/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of pruning and dropping rates over several seeds.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the smallest noise multiplier meeting a privacy budget.
    Calibrate {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Poisson sampling rate.
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: u64,
    },
    /// Report test accuracy of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        /// MNIST directory or CIFAR-10 binary batch file.
        dataset: PathBuf,
    },
}

fn output_dir(path: &Path, flag: Option<PathBuf>, configured: Option<&Path>) -> PathBuf {
    flag.unwrap_or_else(|| experiment::resolve_output_dir(path, configured))
}

fn run(cli: Cli) -> dpssgd::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = output_dir(&config, out, cfg.output_dir.as_deref());
            let r = experiment::run_config(&cfg, &dir)?;
            println!("test accuracy {:.4}", r.test_acc);
            println!(
                "privacy       ε = {}, δ = {} (σ = {}, {} steps)",
                r.epsilon, r.delta, r.sigma, r.steps
            );
            println!("output        {}", dir.display());
        }
        Command::Sweep { spec, out } => {
            let s = SweepSpec::from_path(&spec)?;
            let dir = output_dir(&spec, out, None);
            let rows = experiment::sweep(&s, &dir)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} runs, {failed} failed", rows.len());
            for r in rows.iter().filter(|r| r.status != "ok") {
                eprintln!("cell {} seed {}: {}", r.cell, r.seed, r.error);
            }
            println!("output {}", dir.display());
        }
        Command::Calibrate {
            eps,
            delta,
            q,
            steps,
        } => {
            let sigma = calibrate_sigma(PrivacyBudget::new(eps, delta)?, q, steps)?;
            let achieved = epsilon_for(sigma, q, steps, delta)?;
            println!("{sigma}");
            eprintln!("ε = {achieved} at δ = {delta}, q = {q}, {steps} steps");
        }
        Command::Eval {
            checkpoint,
            dataset,
        } => {
            let acc = experiment::eval_checkpoint(&checkpoint, &dataset)?;
            println!("{acc}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DpError::Schema(errs)) => {
            eprintln!("error[config]: invalid config");
            for e in errs {
                eprintln!("  {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

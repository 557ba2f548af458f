use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kincal::harness::experiment::{calibrate_offline, describe, kernel_check_to, SEED_ENV};
use kincal::harness::{load_config, resolve_seed, run_experiment, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "kincal", version, about = "Bayesian experimental design for DH calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the design loop on the simulated arm and write history, measurements and summaries.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check kernel validity and write kernel_check.json.
    KernelCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate from a recorded measurement CSV and write calibration.json.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bo,
    Random,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bo => Mode::Bo,
            ModeArg::Random => Mode::Random,
            ModeArg::Both => Mode::Both,
        }
    }
}

fn config(path: Option<&PathBuf>, seed: Option<u64>) -> kincal::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::shipped_default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.seed = resolve_seed(cfg.seed, env.as_deref(), seed)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config: path, mode, out, seed } => config(path.as_ref(), seed)
            .and_then(|cfg| run_experiment(&cfg, mode.into(), &out))
            .map(|results| {
                for r in &results {
                    println!("{}", describe(r));
                }
                println!("wrote {}", out.display());
                true
            }),
        Command::KernelCheck { config: path, out } => config(path.as_ref(), None)
            .and_then(|cfg| kernel_check_to(&cfg, &out))
            .map(|(report, path)| {
                println!("kernel check {}: {}", if report.pass { "passed" } else { "FAILED" }, path.display());
                report.pass
            }),
        Command::Calibrate { config: path, data, out } => config(path.as_ref(), None)
            .and_then(|cfg| calibrate_offline(&cfg, &data, &out))
            .map(|report| {
                println!(
                    "calibrated from {} measurements, position rms {:.3e} m, {}",
                    report.measurements,
                    report.position_rms_m,
                    if report.converged { "converged" } else { "stopped at max iterations" }
                );
                true
            }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

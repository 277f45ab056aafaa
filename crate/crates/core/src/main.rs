#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pinn_ntk::config::{Experiment, ExperimentConfig};
use pinn_ntk::experiments;

#[derive(Parser)]
#[command(
    name = "pinn-ntk",
    version,
    about = "PINN and NTK experiments for 1-D multiscale elliptic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error spectrum of a PINN on the four-frequency Poisson problem during training.
    FreqPrinciple(RunArgs),
    /// Frobenius norm of the interior NTK block over a sweep of ε.
    NtkScan(RunArgs),
    /// Full eigenspectrum of the interior NTK block at one ε.
    NtkSpectrum(RunArgs),
    /// Regression versus Poisson and Darcy PINNs on the two-scale solution.
    TwoScale(RunArgs),
    /// One-step check of the residual dynamics against the NTK.
    FlowCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Named preset (fig1, fig2a, fig2b, fig3, fig4, flow).
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the preset and config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: out/<preset>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent seeds and trials.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the reduced-budget variant of the preset.
    #[arg(long)]
    fast: bool,
}

fn resolve(experiment: Experiment, args: &RunArgs) -> pinn_ntk::Result<ExperimentConfig> {
    let mut name = args
        .preset
        .clone()
        .unwrap_or_else(|| experiment.default_preset().to_string());
    if args.fast && !name.ends_with("-fast") {
        name.push_str("-fast");
    }
    let mut cfg = ExperimentConfig::preset(&name)?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        let names_base = text.lines().any(|l| {
            let l = l.trim_start();
            l.starts_with("preset") || l.starts_with("experiment")
        });
        cfg = if names_base {
            ExperimentConfig::parse(&text)?
        } else {
            ExperimentConfig::parse(&format!("preset={name}\n{text}"))?
        };
    }
    if cfg.experiment != experiment {
        return Err(pinn_ntk::Error::Config(format!(
            "preset '{}' belongs to {}, not {experiment}",
            cfg.preset, cfg.experiment
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::FreqPrinciple(a) => (Experiment::FreqPrinciple, a),
        Command::NtkScan(a) => (Experiment::NtkScan, a),
        Command::NtkSpectrum(a) => (Experiment::NtkSpectrum, a),
        Command::TwoScale(a) => (Experiment::TwoScale, a),
        Command::FlowCheck(a) => (Experiment::FlowCheck, a),
    };
    let result = resolve(experiment, args).and_then(|cfg| {
        experiments::run(&cfg)?;
        println!("{experiment}: wrote {}", cfg.out_dir.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `tqs` — command-line driver for tailored-quench spectroscopy experiments.
//!
//! Four subcommands map onto the four protocols: `thermal-green`,
//! `ground-green`, `otoc`, and `music`. Each loads a JSON experiment
//! config, applies any flag overrides, validates, runs, and writes a
//! self-describing artifact directory. Exit status is zero on success;
//! failures print a stage-tagged message on stderr and exit nonzero.

mod artifacts;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{EvolutionSpec, ExperimentConfig, NoiseConfig, Protocol};

#[derive(Parser)]
#[command(
    name = "tqs",
    version,
    about = "Tailored-quench spectroscopy for parity-symmetric Hamiltonians",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Finite-temperature Green's function reconstruction.
    ThermalGreen(RunArgs),
    /// Ground-state (or selected-eigenstate) Green's function.
    GroundGreen(RunArgs),
    /// Out-of-time-order correlator reconstruction.
    Otoc(RunArgs),
    /// Frequency analysis of an existing signal file.
    Music(MusicArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EvolutionFlag {
    /// Exact spectral propagation.
    Exact,
    /// First-order product formula.
    Trotter1,
    /// Second-order (symmetrized) product formula.
    Trotter2,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Dynamics backend (overrides `evolution` in the config).
    #[arg(long, value_enum)]
    evolution: Option<EvolutionFlag>,
    /// State-preparation error strength (overrides the `noise` block).
    #[arg(long)]
    noise_epsilon: Option<f64>,
    /// Shots per measured point (overrides `shots` in the config).
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Args)]
struct MusicArgs {
    #[command(flatten)]
    common: RunArgs,
    /// Signal CSV to analyze (overrides `signal_file` in the config).
    #[arg(long)]
    signal: Option<PathBuf>,
}

impl RunArgs {
    /// Loads the config and applies flag overrides, then validates against
    /// the invoked protocol.
    fn resolve(&self, expected: Protocol) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).context("[config]")?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(flag) = self.evolution {
            cfg.evolution = match flag {
                EvolutionFlag::Exact => EvolutionSpec::Exact,
                EvolutionFlag::Trotter1 => EvolutionSpec::Trotter1 {
                    dt_trotter: self.override_trotter_step(&cfg),
                },
                EvolutionFlag::Trotter2 => EvolutionSpec::Trotter2 {
                    dt_trotter: self.override_trotter_step(&cfg),
                },
            };
        }
        if let Some(eps) = self.noise_epsilon {
            let seed = cfg.noise.and_then(|n| n.seed);
            cfg.noise = Some(NoiseConfig { epsilon: eps, seed });
        }
        if let Some(shots) = self.shots {
            cfg.shots = Some(shots);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.validate(expected).context("[config]")?;
        Ok(cfg)
    }

    /// Step size when a flag switches on a product formula: keep a
    /// config-declared step if one exists, else run one product step per
    /// grid point.
    fn override_trotter_step(&self, cfg: &ExperimentConfig) -> f64 {
        cfg.evolution
            .trotter()
            .map(|(dt, _)| dt)
            .or_else(|| cfg.time_grid.as_ref().map(|tg| tg.dt))
            .unwrap_or(f64::NAN)
    }
}

fn dispatch(cli: Cli) -> Result<run::RunSummary> {
    let (cfg, out_flag) = match &cli.cmd {
        Cmd::ThermalGreen(a) => (a.resolve(Protocol::ThermalGreen)?, a.out.clone()),
        Cmd::GroundGreen(a) => (a.resolve(Protocol::GroundGreen)?, a.out.clone()),
        Cmd::Otoc(a) => (a.resolve(Protocol::Otoc)?, a.out.clone()),
        Cmd::Music(m) => {
            let mut cfg = {
                let mut cfg = ExperimentConfig::load(&m.common.config).context("[config]")?;
                if let Some(sig) = &m.signal {
                    cfg.signal_file = Some(sig.clone());
                }
                cfg
            };
            if let Some(seed) = m.common.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &m.common.out {
                cfg.output_dir = Some(out.clone());
            }
            cfg.validate(Protocol::MusicOnly).context("[config]")?;
            (cfg, m.common.out.clone())
        }
    };
    let out_dir = run::resolve_out_dir(&cfg, out_flag.as_deref())?;
    run::run(&cfg, &out_dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(summary) => {
            println!(
                "wrote {} artifact(s) to {}",
                summary.artifacts.len(),
                summary.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("tqs: error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

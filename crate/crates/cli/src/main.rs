use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hhlab::{exit_code, run_command, write_artifacts, RunConfig};

const AFTER_HELP: &str = "\
Outputs (all CSV files start with a header row):
  scan-hormander  curve.csv (v,D), roots.csv (root), rank_map.csv (v,n,m,h,D,rank), curve.svg
  simulate        trajectory.csv (t,v,n,m,h,zeta), spikes.csv (t), trajectory.svg
  control-demo    control.csv (s,vbar,nbar,mbar,hbar,hdot,J), replay.csv (t,v,n,m,h,zeta), control.svg
  ergodicity      drift.csv (v,zeta,estimate,standard_error,negative,outside),
                  compact.csv (radius,v,zeta,estimate,standard_error,negative),
                  balls.csv (ball,beta,radius,coordinate,center,partner,scale),
                  regenerations.csv (path_id,index), estimates.csv (function,estimate,ci_low,ci_high),
                  multistart.csv (i,j,vz_distance,gating_distance),
                  invariance.csv (phase,residual,noise_floor,pass)
  ou-validate     ou.csv (target_mean,sample_mean,standard_error,target_variance,sample_variance)
Every command also writes manifest.toml with the fitted quantities and the full configuration.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 insufficient data.";

#[derive(Parser)]
#[command(name = "hhlab", version, about = "Stochastic Hodgkin-Huxley laboratory", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Scan the determinant criterion along the equilibrium curve and map the bracket rank.
    ScanHormander,
    /// Simulate one trajectory and count spikes.
    Simulate,
    /// Steer a start state to rest with a synthesized control and replay it.
    ControlDemo,
    /// Drift, minorization, regeneration and invariance diagnostics.
    Ergodicity,
    /// Check the sampled input process against its stationary law.
    OuValidate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ScanHormander => "scan-hormander",
            Command::Simulate => "simulate",
            Command::ControlDemo => "control-demo",
            Command::Ergodicity => "ergodicity",
            Command::OuValidate => "ou-validate",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("hhlab-out"));
    let artifacts = run_command(cli.command.name(), &cfg)?;
    write_artifacts(&artifacts, &out)?;
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}", artifacts.summary);
    let _ = writeln!(stdout, "wrote {} files to {}", artifacts.files.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

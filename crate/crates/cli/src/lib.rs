//! Experiment runner for the stochastic Hodgkin-Huxley laboratory.
//!
//! Every command reads a [`config::RunConfig`], writes its artifacts (CSV
//! tables, SVG plots and a `manifest.toml`) into an output directory and
//! prints a short summary. Outputs depend only on the configuration, the
//! seed and the program version.

pub mod commands;
pub mod config;
pub mod plot;
pub mod spikes;

use std::path::Path;

use anyhow::{Context, Result};

pub use commands::{run_command, Artifacts, COMMANDS};
pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_INSUFFICIENT: u8 = 4;

/// Exit code for an error: configuration problems give 2, shortage of data
/// gives 4, everything else 3.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        match cause.downcast_ref::<hhlab_core::Error>() {
            Some(hhlab_core::Error::Config(_)) => return EXIT_CONFIG,
            Some(hhlab_core::Error::InsufficientData(_)) => return EXIT_INSUFFICIENT,
            Some(_) => return EXIT_RUNTIME,
            None => {}
        }
    }
    EXIT_RUNTIME
}

/// Writes every artifact into `dir`, creating it if needed.
pub fn write_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, content) in &artifacts.files {
        let path = dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

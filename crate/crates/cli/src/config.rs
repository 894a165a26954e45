//! Run configuration files.
//!
//! A run is described by a TOML file with a top-level `seed`, an optional
//! `out` directory, the shared `[signal]` and `[sim]` blocks, and one block
//! per command. Every field has a default, so an empty file is a valid
//! configuration. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use hhlab_core::model::{SignalSpec, State5};
use hhlab_core::sde::SimConfig;
use serde::{Deserialize, Serialize};

/// Invalid or unreadable configuration; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, why: impl fmt::Display) -> ConfigError {
    ConfigError(format!("`{field}` {why}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Command this file was written for; checked against the subcommand.
    pub command: Option<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub signal: SignalSection,
    pub sim: SimSection,
    pub scan_hormander: ScanSection,
    pub simulate: SimulateSection,
    pub control: ControlSection,
    pub ergodicity: ErgodicitySection,
    pub ou_validate: OuSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 1,
            out: None,
            signal: SignalSection::default(),
            sim: SimSection::default(),
            scan_hormander: ScanSection::default(),
            simulate: SimulateSection::default(),
            control: ControlSection::default(),
            ergodicity: ErgodicitySection::default(),
            ou_validate: OuSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub period: f64,
    pub c0: f64,
    /// `[a_j, b_j]` pairs for `a_j cos(2πjt/T) + b_j sin(2πjt/T)`.
    pub harmonics: Vec<(f64, f64)>,
    pub tau: f64,
    pub gamma: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self { period: 5.0, c0: 10.0, harmonics: Vec::new(), tau: 1.0, gamma: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: 0.005, t_end: 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub v_min: f64,
    pub v_max: f64,
    pub step: f64,
    /// Random nodes in `[v_min, v_max] × [0.1, 0.9]³` for the rank map.
    pub rank_samples: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { v_min: -15.0, v_max: 30.0, step: 0.01, rank_samples: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// The five-dimensional system with Ornstein-Uhlenbeck input.
    Stochastic,
    /// The classical four-dimensional system driven directly by `S(t)`.
    Classical,
}

/// A start state: `"equilibrium"` or an explicit `[v, n, m, h, zeta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Start {
    Named(String),
    State([f64; 5]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub system: System,
    pub start: Start,
    /// Every this many steps a row is written to the trajectory CSV.
    pub record_every: usize,
    pub spike_threshold: f64,
    pub spike_debounce: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            system: System::Stochastic,
            start: Start::Named("equilibrium".into()),
            record_every: 10,
            spike_threshold: 40.0,
            spike_debounce: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub start: [f64; 5],
    pub eps: f64,
    pub grid_dt: f64,
    /// Control horizon; the shortest admissible one when absent.
    pub t_end: Option<f64>,
    /// Gate offsets below this are left out of the decay-rate fits.
    pub decay_floor: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { start: [50.0, 0.9, 0.1, 0.9, -20.0], eps: 0.05, grid_dt: 0.005, t_end: None, decay_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicitySection {
    pub smoothing_radius: f64,
    /// Radii scanned outward for the compact set.
    pub compact_radii: Vec<f64>,
    pub compact_mc: usize,
    pub drift_v: Vec<f64>,
    pub drift_zeta: Vec<f64>,
    pub drift_mc: usize,
    /// Starting points for the transition sample.
    pub transition_starts: usize,
    pub transition_periods: usize,
    pub balls: usize,
    pub radii: Vec<f64>,
    pub bandwidth: Option<f64>,
    pub discount: f64,
    pub probe_neighbours: usize,
    pub chains: usize,
    pub chain_length: usize,
    pub bootstrap: usize,
    pub min_cycles: usize,
    /// `[v, zeta]` of the multi-start runs; gates start at equilibrium.
    pub multi_starts: Vec<[f64; 2]>,
    pub multi_k_max: usize,
    pub multi_replicates: usize,
    pub multi_threshold: f64,
    /// Phases as fractions of the period.
    pub phases: Vec<f64>,
    pub invariance_samples: usize,
    pub invariance_replicates: usize,
    pub invariance_factor: f64,
}

impl Default for ErgodicitySection {
    fn default() -> Self {
        Self {
            smoothing_radius: 2.0,
            compact_radii: vec![20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 140.0, 160.0, 180.0, 200.0, 250.0],
            compact_mc: 1000,
            drift_v: vec![60.0, 100.0, 200.0],
            drift_zeta: vec![0.0, 60.0, 200.0],
            drift_mc: 5000,
            transition_starts: 50,
            transition_periods: 200,
            balls: 4,
            radii: vec![0.25, 0.5, 1.0],
            bandwidth: None,
            discount: 0.5,
            probe_neighbours: 100,
            chains: 8,
            chain_length: 5000,
            bootstrap: 1000,
            min_cycles: 30,
            multi_starts: vec![[-10.0, 10.0], [0.0, 0.0], [30.0, 20.0], [60.0, 10.0]],
            multi_k_max: 400,
            multi_replicates: 4,
            multi_threshold: 3.0,
            phases: vec![0.0, 0.25, 0.5],
            invariance_samples: 500,
            invariance_replicates: 8,
            invariance_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuSection {
    pub paths: usize,
    pub periods: usize,
}

impl Default for OuSection {
    fn default() -> Self {
        Self { paths: 10_000, periods: 10 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn signal_spec(&self) -> Result<SignalSpec, ConfigError> {
        let s = &self.signal;
        let spec = SignalSpec {
            period: s.period,
            c0: s.c0,
            harmonics: s.harmonics.clone(),
            tau: s.tau,
            gamma: s.gamma,
        };
        spec.validate().map_err(|e| ConfigError(format!("[signal]: {e}")))?;
        Ok(spec)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let cfg = SimConfig::new(self.sim.dt, self.sim.t_end, self.seed);
        cfg.validate().map_err(|e| ConfigError(format!("[sim]: {e}")))?;
        Ok(cfg)
    }

    /// Checks the sections used by `command`.
    pub fn validate(&self, command: &str) -> Result<(), ConfigError> {
        if let Some(c) = &self.command {
            if c != command {
                return Err(invalid("command", format!("is \"{c}\" but the subcommand is \"{command}\"")));
            }
        }
        self.signal_spec()?;
        self.sim_config()?;
        match command {
            "scan-hormander" => {
                let s = &self.scan_hormander;
                if !(s.step > 0.0) {
                    return Err(invalid("scan_hormander.step", "must be positive"));
                }
                if !(s.v_min.is_finite() && s.v_max.is_finite()) {
                    return Err(invalid("scan_hormander.v_min/v_max", "must be finite"));
                }
            }
            "simulate" => {
                let s = &self.simulate;
                if s.record_every == 0 {
                    return Err(invalid("simulate.record_every", "must be at least 1"));
                }
                if !(s.spike_debounce >= 0.0) {
                    return Err(invalid("simulate.spike_debounce", "must be non-negative"));
                }
                if let Start::Named(name) = &s.start {
                    if name != "equilibrium" {
                        return Err(invalid("simulate.start", "must be \"equilibrium\" or [v, n, m, h, zeta]"));
                    }
                }
            }
            "control-demo" => {
                let c = &self.control;
                if !(c.grid_dt > 0.0) {
                    return Err(invalid("control.grid_dt", "must be positive"));
                }
                if !(c.decay_floor > 0.0) {
                    return Err(invalid("control.decay_floor", "must be positive"));
                }
                State5::from_array(c.start).map_err(|e| invalid("control.start", e))?;
            }
            "ergodicity" => {
                let e = &self.ergodicity;
                self.sim_config()?
                    .steps_per_period(&self.signal_spec()?)
                    .map_err(|err| invalid("sim.dt", err))?;
                if e.compact_radii.is_empty() || e.compact_radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(invalid("ergodicity.compact_radii", "must be a non-empty list of positive radii"));
                }
                if e.drift_mc < 1000 || e.compact_mc < 1000 {
                    return Err(invalid("ergodicity.drift_mc/compact_mc", "must be at least 1000"));
                }
                if e.radii.is_empty() || e.radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(invalid("ergodicity.radii", "must be a non-empty list of positive radii"));
                }
                if !(e.discount > 0.0 && e.discount <= 1.0) {
                    return Err(invalid("ergodicity.discount", "must lie in (0, 1]"));
                }
                if e.chains == 0 || e.chain_length == 0 || e.transition_starts == 0 {
                    return Err(invalid("ergodicity.chains/chain_length/transition_starts", "must be positive"));
                }
                if e.multi_starts.len() < 2 {
                    return Err(invalid("ergodicity.multi_starts", "needs at least two starts"));
                }
                if e.phases.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(invalid("ergodicity.phases", "must lie in [0, 1]"));
                }
            }
            "ou-validate" => {
                if self.ou_validate.paths < 2 {
                    return Err(invalid("ou_validate.paths", "must be at least 2"));
                }
            }
            _ => return Err(ConfigError(format!("unknown command \"{command}\""))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.signal.harmonics = vec![(1.0, -0.5)];
        cfg.control.t_end = Some(3.0);
        cfg.simulate.start = Start::State([1.0, 0.3, 0.05, 0.6, 0.0]);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_line_and_field() {
        let err = RunConfig::from_toml("seed = 3\n[signal]\nperiod = 5.0\ngama = 2.0\n").unwrap_err();
        assert!(err.0.contains("line 4"), "{}", err.0);
        assert!(err.0.contains("gama"), "{}", err.0);
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cfg = RunConfig::from_toml("[scan_hormander]\nstep = 0.0\n").unwrap();
        assert!(cfg.validate("scan-hormander").unwrap_err().0.contains("scan_hormander.step"));
        let cfg = RunConfig::from_toml("[signal]\ntau = -1.0\n").unwrap();
        assert!(cfg.validate("simulate").unwrap_err().0.contains("tau"));
        let cfg = RunConfig::from_toml("command = \"simulate\"\n").unwrap();
        assert!(cfg.validate("ergodicity").is_err());
        let cfg = RunConfig::from_toml("[sim]\ndt = 0.003\n").unwrap();
        assert!(cfg.validate("ergodicity").unwrap_err().0.contains("sim.dt"));
    }
}

//! Run configuration: every parameter of a simulation, detection or sweep
//! run, loadable from TOML or JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{SweepGrid, SweepSettings, DEFAULT_GATE};
use crate::pipeline::DetectorConfig;
use crate::signalproc::ChirpSpec;
use crate::simulate::ScenarioConfig;

/// Sample rate used for simulated recordings (Hz).
pub const SIMULATION_SAMPLE_RATE: f64 = 192_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub chirp: ChirpSpec,
    pub scenario: ScenarioConfig,
    pub detector: DetectorConfig,
    /// Ground-truth gate (m).
    pub gate: f64,
    pub target_scenarios: usize,
    pub clutter_scenarios: usize,
    pub master_seed: u64,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chirp: ChirpSpec {
                sample_rate: SIMULATION_SAMPLE_RATE,
                ..ChirpSpec::default()
            },
            scenario: ScenarioConfig::default(),
            detector: DetectorConfig::default(),
            gate: DEFAULT_GATE,
            target_scenarios: 300,
            clutter_scenarios: 1000,
            master_seed: 0,
            sweep: SweepGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.scenario.validate(&self.chirp)?;
        self.detector.affinity.validate()?;
        if !(self.detector.eta_mf > 0.0) {
            return Err(Error::param("eta_mf must be positive"));
        }
        if !(self.detector.epsilon >= 0.0) {
            return Err(Error::param("epsilon must be non-negative"));
        }
        if self.detector.spectrum_bins == 0 {
            return Err(Error::param("spectrum_bins must be positive"));
        }
        if (self.detector.affinity.t_pri - self.scenario.t_pri).abs() > 1e-12 {
            return Err(Error::param("affinity.t_pri and scenario.t_pri differ"));
        }
        if !(self.gate > 0.0) {
            return Err(Error::param("gate must be positive"));
        }
        self.sweep.validate()
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            chirp: self.chirp.clone(),
            scenario: self.scenario.clone(),
            detector: self.detector.clone(),
            gate: self.gate,
            target_scenarios: self.target_scenarios,
            clutter_scenarios: self.clutter_scenarios,
            master_seed: self.master_seed,
        }
    }
}

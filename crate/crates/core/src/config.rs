//! Experiment configuration: one JSON document with `scene`, `radio`,
//! `learning` and `simulation` blocks. Every field has a default, so `{}` is a
//! valid config describing the baseline 40-device experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::LearningConfig;
use crate::environment::{SceneConfig, MAX_QUEUE_CAPACITY};
use crate::error::{Error, Result};
use crate::link_budget::{AbsorptionTable, LinkBudgetParams, DEFAULT_ANCHOR_COEFFICIENT, REFERENCE_HUMIDITY};
use crate::simulation::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub band_start_hz: f64,
    pub band_end_hz: f64,
    pub transmit_power_dbm: f64,
    pub beamwidth_deg: f64,
    pub relative_humidity: f64,
    pub temperature_k: f64,
    pub noise_density_dbm_hz: f64,
    /// Absorption coefficient at 575 GHz that scales the embedded table.
    pub absorption_anchor_per_m: f64,
    /// Two-column `frequency_hz k_per_m` file replacing the embedded table.
    pub absorption_table_path: Option<PathBuf>,
    /// Spectral efficiency that defines the service range d_0.
    pub target_spectral_efficiency: f64,
    /// Bandwidth at which d_0 and the Layer 1 threshold are evaluated.
    pub reference_bandwidth_hz: f64,
    /// Minimum received power from the AP for Layer 1; derived from the
    /// target spectral efficiency when absent.
    pub gamma0_dbm: Option<f64>,
    /// Cap relay rates by the agent's own AP-leg rate.
    pub cap_relay_by_ap_leg: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            band_start_hz: 570e9,
            band_end_hz: 580e9,
            transmit_power_dbm: 0.0,
            beamwidth_deg: 10.0,
            relative_humidity: REFERENCE_HUMIDITY,
            temperature_k: 296.0,
            noise_density_dbm_hz: -174.0,
            absorption_anchor_per_m: DEFAULT_ANCHOR_COEFFICIENT,
            absorption_table_path: None,
            target_spectral_efficiency: 10.0,
            reference_bandwidth_hz: 250e6,
            gamma0_dbm: None,
            cap_relay_by_ap_leg: false,
        }
    }
}

impl RadioConfig {
    pub fn carrier_frequency_hz(&self) -> f64 {
        0.5 * (self.band_start_hz + self.band_end_hz)
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.band_end_hz - self.band_start_hz
    }

    /// Link-budget parameters, loading the absorption table if configured.
    pub fn link_params(&self) -> Result<LinkBudgetParams> {
        let absorption = match &self.absorption_table_path {
            Some(path) => AbsorptionTable::load(path, REFERENCE_HUMIDITY)?,
            None => AbsorptionTable::with_anchor(self.absorption_anchor_per_m),
        };
        let params = LinkBudgetParams {
            carrier_frequency_hz: self.carrier_frequency_hz(),
            transmit_power_dbm: self.transmit_power_dbm,
            beamwidth_deg: self.beamwidth_deg,
            relative_humidity: self.relative_humidity,
            temperature_k: self.temperature_k,
            noise_density_dbm_hz: self.noise_density_dbm_hz,
            absorption,
        };
        params.validate().map_err(|e| Error::Config(format!("radio: {e}")))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub episodes: u32,
    pub model: Model,
    pub seed: u64,
    /// Seconds of motion between episodes.
    pub dt_s: f64,
    /// Fraction of final episodes used for summary statistics.
    pub summary_window_fraction: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            episodes: 500,
            model: Model::Model1,
            seed: 1,
            dt_s: 1.0,
            summary_window_fraction: 0.2,
        }
    }
}

impl SimulationBlock {
    /// Number of final episodes in the summary window (at least 1).
    pub fn summary_window(&self) -> usize {
        ((f64::from(self.episodes) * self.summary_window_fraction).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scene: SceneConfig,
    pub radio: RadioConfig,
    pub learning: LearningConfig,
    pub simulation: SimulationBlock,
}

impl SimConfig {
    /// Parse a JSON document, reporting the offending field path on failure.
    pub fn from_json_value(value: Value) -> Result<Self> {
        let cfg: SimConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_json_value(value)
    }

    /// Load `path` and apply `key.path=value` overrides before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_json_value(value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level sanity checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let s = &self.scene;
        if s.device_count == 0 {
            return fail("scene.device_count must be at least 1".into());
        }
        if !(s.body_radius_m >= 0.0) {
            return fail(format!(
                "scene.body_radius_m must be non-negative, got {}",
                s.body_radius_m
            ));
        }
        if s.queue_capacity > MAX_QUEUE_CAPACITY {
            return fail(format!(
                "scene.queue_capacity must be at most {MAX_QUEUE_CAPACITY}, got {}",
                s.queue_capacity
            ));
        }
        s.room().map_err(|e| Error::Config(format!("scene: {e}")))?;

        let r = &self.radio;
        if !(r.band_end_hz > r.band_start_hz && r.band_start_hz > 0.0) {
            return fail("radio.band_start_hz must be positive and below radio.band_end_hz".into());
        }
        if !(r.target_spectral_efficiency > 0.0) {
            return fail("radio.target_spectral_efficiency must be positive".into());
        }
        if !(r.reference_bandwidth_hz > 0.0) {
            return fail("radio.reference_bandwidth_hz must be positive".into());
        }
        if !(r.absorption_anchor_per_m >= 0.0) {
            return fail("radio.absorption_anchor_per_m must be non-negative".into());
        }
        if r.absorption_table_path.is_none() {
            r.link_params()?;
        }

        self.learning.validate().map_err(Error::Config)?;

        let sim = &self.simulation;
        if sim.episodes == 0 {
            return fail("simulation.episodes must be at least 1".into());
        }
        if !(sim.dt_s > 0.0) {
            return fail(format!("simulation.dt_s must be positive, got {}", sim.dt_s));
        }
        if !(sim.summary_window_fraction > 0.0 && sim.summary_window_fraction <= 1.0) {
            return fail("simulation.summary_window_fraction must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Apply one `dotted.path=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} must look like key.path=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override path {path:?} has an empty segment")));
    }
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override path {path:?}: {} is not an object",
                keys[..i].join(".")
            ))
        })?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("non-empty key list")
}

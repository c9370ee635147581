//! Simulation configuration: one nested TOML document.
//!
//! Every table and key is optional; missing values take the defaults of the
//! reference system. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::atmosphere::{AirDensityModel, WindProfile};
use crate::controller::{ControllerConfig, FlightPhase};
use crate::integrator::model::{KiteModel, TetherModel};
use crate::kite_four_point::FourPointGeometry;
use crate::kite_one_point::{AeroTable, KiteParams};
use crate::tether::TetherParams;
use crate::winch::WinchParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Batch,
    Parking,
    Calibrate,
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSelection {
    pub kite: KiteModel,
    pub tether: TetherModel,
}

impl Default for ModelSelection {
    fn default() -> Self {
        Self { kite: KiteModel::FourPoint, tether: TetherModel::Segmented }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AtmosphereConfig {
    pub wind: WindProfile,
    pub density: AirDensityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Absolute tolerance of the position states, m.
    pub abstol_position: f64,
    /// Absolute tolerance of the velocity states, m/s.
    pub abstol_velocity: f64,
    pub reltol: f64,
    /// Control interval, s.
    pub interval: f64,
    /// Sub-step budget per interval.
    pub max_substeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { abstol_position: 0.018, abstol_velocity: 3e-4, reltol: 1e-3, interval: 0.05, max_substeps: 5000 }
    }
}

impl SolverConfig {
    /// Both absolute tolerances and the relative tolerance scaled by `f`.
    pub fn tightened(&self, f: f64) -> Self {
        Self {
            abstol_position: self.abstol_position / f,
            abstol_velocity: self.abstol_velocity / f,
            reltol: self.reltol / f,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Logged duration, s.
    pub duration: f64,
    pub seed: u64,
    /// Initial tether length, m.
    pub l_t: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    /// Phase in which automatic control starts.
    pub phase: FlightPhase,
    /// Time with frozen controllers before logging starts, s.
    pub settle_time: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Batch,
            duration: 120.0,
            seed: 1,
            l_t: 392.0,
            elevation_deg: 70.0,
            azimuth_deg: 0.0,
            phase: FlightPhase::ReelOutRight,
            settle_time: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub model: ModelSelection,
    pub atmosphere: AtmosphereConfig,
    pub tether: TetherParams,
    pub kite: KiteParams,
    pub kite_geometry: FourPointGeometry,
    pub aero: AeroTable,
    pub winch: WinchParams,
    pub controller: ControllerConfig,
    pub solver: SolverConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |key: &'static str, e: &dyn std::fmt::Display| ConfigError::Invalid { key, message: e.to_string() };
        self.atmosphere.wind.validate().map_err(|e| inv("atmosphere.wind", &e))?;
        self.atmosphere.density.validate().map_err(|e| inv("atmosphere.density", &e))?;
        match self.model.tether {
            TetherModel::Straight => self.tether.validate(),
            TetherModel::Segmented => self.tether.validate_segmented(),
        }
        .map_err(|e| inv("tether", &e))?;
        self.kite.validate().map_err(|e| inv("kite", &e))?;
        self.kite_geometry.validate().map_err(|e| inv("kite_geometry", &e))?;
        self.aero.validate().map_err(|e| inv("aero", &e))?;
        self.winch.validate().map_err(|e| inv("winch", &e))?;
        self.controller.validate().map_err(|e| inv("controller", &e))?;
        let s = &self.solver;
        if !(s.abstol_position > 0.0
            && s.abstol_velocity > 0.0
            && s.reltol > 0.0
            && s.interval > 0.0
            && s.max_substeps > 0)
        {
            return Err(inv("solver", &"tolerances, interval and max_substeps must be positive"));
        }
        let sc = &self.scenario;
        if !(sc.duration >= 0.0 && sc.settle_time >= 0.0 && sc.l_t > 0.0) {
            return Err(inv("scenario", &"duration and settle_time must be non-negative, l_t positive"));
        }
        if !(0.0 < sc.elevation_deg && sc.elevation_deg < 90.0) {
            return Err(inv("scenario.elevation_deg", &"must be in (0, 90)"));
        }
        Ok(())
    }

    /// Tether parameters with the discretization of the selected tether model.
    pub fn effective_tether(&self) -> TetherParams {
        match self.model.tether {
            TetherModel::Straight => TetherParams { n_segments: 1, ..self.tether.clone() },
            TetherModel::Segmented => self.tether.clone(),
        }
    }
}

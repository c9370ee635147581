//! Ground station: drum, gearbox and asynchronous generator.
//!
//! Speeds are expressed at the tether (m/s); torques at the generator shaft.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WinchError {
    #[error("invalid winch parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WinchParams {
    /// Gearbox ratio.
    pub gear_ratio: f64,
    /// Drum radius, m.
    pub drum_radius: f64,
    /// Inertia seen from the generator, kg·m².
    pub inertia: f64,
    /// Viscous friction coefficient, N·s.
    pub c_f: f64,
    /// Static friction torque, N·m.
    pub tau_s: f64,
    /// Rotor resistance, Ω.
    pub r_rotor: f64,
    /// Self inductance, H.
    pub inductance: f64,
    /// Nominal synchronous speed, m/s.
    pub v_s_nominal: f64,
    /// Nominal voltage, V.
    pub e_nominal: f64,
}

impl Default for WinchParams {
    fn default() -> Self {
        Self {
            gear_ratio: 6.2,
            drum_radius: 0.1615,
            inertia: 0.328,
            c_f: 0.799,
            tau_s: 3.18,
            r_rotor: 0.0727,
            inductance: 0.00297,
            v_s_nominal: 4.09,
            e_nominal: 231.0,
        }
    }
}

impl WinchParams {
    pub fn validate(&self) -> Result<(), WinchError> {
        let all = [
            self.gear_ratio,
            self.drum_radius,
            self.inertia,
            self.c_f,
            self.tau_s,
            self.r_rotor,
            self.inductance,
            self.v_s_nominal,
            self.e_nominal,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(WinchError::InvalidParams("all winch parameters must be positive".into()))
        }
    }

    /// Drum radius over gear ratio, m.
    fn lever(&self) -> f64 {
        self.drum_radius / self.gear_ratio
    }

    /// Torque gain of the generator; reduced above the nominal speed because
    /// the voltage is capped at its nominal value.
    pub fn alpha(&self, v_s: f64) -> f64 {
        let v = v_s.abs().max(self.v_s_nominal);
        self.e_nominal.powi(2) * self.drum_radius / (v * v * self.r_rotor * self.gear_ratio)
    }

    pub fn beta(&self) -> f64 {
        (self.inductance / self.r_rotor).powi(2) * (self.gear_ratio / self.drum_radius).powi(2)
    }
}

/// Tether length, reel-out speed and synchronous speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinchState {
    pub l_t: f64,
    pub v_t_o: f64,
    pub v_s: f64,
}

/// Generator torque for synchronous speed `v_s` and reel-out speed `v_t_o`;
/// it drives the drum towards the synchronous speed.
pub fn generator_torque(params: &WinchParams, v_s: f64, v_t_o: f64) -> f64 {
    torque_at_slip(params, v_s, v_s - v_t_o)
}

/// Generator torque as a function of the slip `v_s − v_t_o`.
pub fn torque_at_slip(params: &WinchParams, v_s: f64, slip: f64) -> f64 {
    params.alpha(v_s) * slip / (1.0 + params.beta() * slip * slip)
}

pub fn friction_torque(params: &WinchParams, v_t_o: f64) -> f64 {
    let sign = if v_t_o > 0.0 {
        1.0
    } else if v_t_o < 0.0 {
        -1.0
    } else {
        0.0
    };
    params.c_f * v_t_o + params.tau_s * sign
}

/// Reel-out acceleration for tether force magnitude `force`.
pub fn acceleration(params: &WinchParams, v_s: f64, v_t_o: f64, force: f64) -> f64 {
    let tau_d = params.lever() * force;
    let tau = generator_torque(params, v_s, v_t_o) + tau_d - friction_torque(params, v_t_o);
    params.lever() * tau / params.inertia
}

/// Residual `(v − l̇, a − v̇)` of the winch ODE.
pub fn winch_residual(state: &WinchState, l_dot: f64, v_dot: f64, force: f64, params: &WinchParams) -> [f64; 2] {
    [state.v_t_o - l_dot, acceleration(params, state.v_s, state.v_t_o, force) - v_dot]
}

/// Mechanical power taken from the tether, W (positive while generating).
pub fn mechanical_power(force: f64, v_t_o: f64) -> f64 {
    force * v_t_o
}

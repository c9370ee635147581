//! Wind profile and air density as functions of height.
//!
//! The wind speed at height `z` is computed from a reference measurement
//! `v_w_ref` at `z_ref` using a power law, a logarithmic law, or a linear
//! blend of both:
//!
//! ```text
//! v_exp   = v_ref · (z / z_ref)^α
//! v_log   = v_ref · ln(z / z0) / ln(z_ref / z0)
//! v_blend = v_log + K · (v_log − v_exp)
//! ```
//!
//! Air density decays exponentially with height, `ρ = ρ0 · exp(−z / H_ρ)`.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtmosphereError {
    #[error("height {0} m is outside the domain of the wind/density model")]
    Domain(f64),
    #[error("invalid wind profile: {0}")]
    InvalidProfile(String),
    #[error("wind profile fit failed: {reason}; residuals {residuals:?} m/s")]
    FitFailure { reason: String, residuals: [f64; 3] },
}

/// Which height law [`wind_speed`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindLaw {
    Power,
    Log,
    Blended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindProfile {
    /// Wind speed at the reference height, m/s.
    pub v_wind_ref: f64,
    /// Reference height, m.
    pub z_ref: f64,
    /// Roughness length, m.
    pub z0: f64,
    /// Blend coefficient between the log and power law.
    pub k_blend: f64,
    /// Power-law exponent.
    pub alpha: f64,
    /// Standard deviation of the wind speed as a fraction of the mean.
    pub turbulence_intensity: f64,
    /// Law used when the simulator asks for the wind vector.
    pub law: WindLaw,
    /// Direction the wind blows towards, degrees counter-clockwise from +x.
    pub direction_deg: f64,
}

impl Default for WindProfile {
    fn default() -> Self {
        let mut profile = Self {
            v_wind_ref: 9.51,
            z_ref: 6.0,
            z0: 2.0e-4,
            k_blend: 1.0,
            alpha: 1.0 / 7.0,
            turbulence_intensity: 0.0,
            law: WindLaw::Blended,
            direction_deg: 0.0,
        };
        profile.alpha = fit_exponent(&profile, DEFAULT_FIT_HEIGHT).unwrap_or(1.0 / 7.0);
        profile
    }
}

/// Height at which the power-law exponent is matched to the log law by default.
pub const DEFAULT_FIT_HEIGHT: f64 = 100.0;

impl WindProfile {
    pub fn validate(&self) -> Result<(), AtmosphereError> {
        let bad = |msg: &str| Err(AtmosphereError::InvalidProfile(msg.to_string()));
        if !(self.z0 > 0.0) {
            return bad("z0 must be positive");
        }
        if !(self.z_ref > self.z0) {
            return bad("z_ref must exceed z0");
        }
        if !(self.v_wind_ref >= 0.0) {
            return bad("v_wind_ref must be non-negative");
        }
        if !(self.turbulence_intensity >= 0.0) {
            return bad("turbulence_intensity must be non-negative");
        }
        if !self.alpha.is_finite() || !self.k_blend.is_finite() || !self.direction_deg.is_finite() {
            return bad("alpha, k_blend and direction_deg must be finite");
        }
        Ok(())
    }

    /// Unit vector of the horizontal wind direction.
    pub fn direction(&self) -> Vec3 {
        let a = self.direction_deg.to_radians();
        Vector3::new(a.cos(), a.sin(), 0.0)
    }

    fn v_exp(&self, z: f64) -> f64 {
        self.v_wind_ref * (z / self.z_ref).powf(self.alpha)
    }

    fn v_log(&self, z: f64) -> f64 {
        self.v_wind_ref * log_ratio(z, self.z_ref, self.z0)
    }
}

/// `ln(z/z0) / ln(z_ref/z0)`, the log-law speed relative to the reference speed.
fn log_ratio(z: f64, z_ref: f64, z0: f64) -> f64 {
    (z / z0).ln() / (z_ref / z0).ln()
}

/// Wind speed at height `z` for the requested law.
///
/// Heights below the roughness length are clamped to `z0`.
pub fn wind_speed(profile: &WindProfile, z: f64, law: WindLaw) -> Result<f64, AtmosphereError> {
    if !z.is_finite() || z <= 0.0 {
        return Err(AtmosphereError::Domain(z));
    }
    Ok(wind_speed_clamped(profile, z, law))
}

/// Same as [`wind_speed`] but accepts any height, clamping it to `z0` from below.
/// Used for tether particles that sit at or below ground level.
pub fn wind_speed_clamped(profile: &WindProfile, z: f64, law: WindLaw) -> f64 {
    let z = if z.is_finite() { z.max(profile.z0) } else { profile.z0 };
    let v = match law {
        WindLaw::Power => profile.v_exp(z),
        WindLaw::Log => profile.v_log(z),
        WindLaw::Blended => {
            let v_log = profile.v_log(z);
            v_log + profile.k_blend * (v_log - profile.v_exp(z))
        }
    };
    v.max(0.0)
}

/// Power-law exponent that makes the power law agree with the log law at `z1`.
pub fn fit_exponent(profile: &WindProfile, z1: f64) -> Result<f64, AtmosphereError> {
    if !z1.is_finite() || z1 <= profile.z_ref {
        return Err(AtmosphereError::Domain(z1));
    }
    let ratio = log_ratio(z1, profile.z_ref, profile.z0);
    Ok(ratio.ln() / (z1 / profile.z_ref).ln())
}

const Z0_BOUNDS: (f64, f64) = (1.0e-6, 1.0);
const K_BOUNDS: (f64, f64) = (-5.0, 5.0);

/// Fits roughness length and blend coefficient to three (height, speed)
/// samples. The first sample must be taken at `z_ref`.
///
/// With the exponent matched at the middle height the blended law equals the
/// log law there, so the middle sample fixes `z0` and the top sample fixes `K`.
pub fn fit_profile(samples: [(f64, f64); 3], z_ref: f64, v_wind_ref: f64) -> Result<WindProfile, AtmosphereError> {
    let [(z_a, _), (z_b, v_b), (z_c, v_c)] = samples;
    if !(z_a < z_b && z_b < z_c) {
        return Err(AtmosphereError::InvalidProfile("sample heights must be strictly increasing".into()));
    }
    if (z_a - z_ref).abs() > 1e-9 * z_ref.max(1.0) {
        return Err(AtmosphereError::InvalidProfile("first sample must be at the reference height".into()));
    }
    if !(v_wind_ref > 0.0) {
        return Err(AtmosphereError::InvalidProfile("reference speed must be positive".into()));
    }

    let residuals = |p: &WindProfile| -> [f64; 3] {
        let mut r = [0.0; 3];
        for (ri, (z, v)) in r.iter_mut().zip(samples) {
            *ri = wind_speed_clamped(p, z, WindLaw::Blended) - v;
        }
        r
    };
    let failure = |reason: &str, p: &WindProfile| AtmosphereError::FitFailure {
        reason: reason.to_string(),
        residuals: residuals(p),
    };

    // ln(z_b/z0)/ln(z_ref/z0) increases monotonically with ln z0.
    let target = v_b / v_wind_ref;
    let ratio_at = |ln_z0: f64| log_ratio(z_b, z_ref, ln_z0.exp());
    let (mut lo, mut hi) = (Z0_BOUNDS.0.ln(), Z0_BOUNDS.1.ln().min(z_ref.ln() - 1e-9));
    let mut profile = WindProfile {
        v_wind_ref,
        z_ref,
        z0: Z0_BOUNDS.0,
        k_blend: 0.0,
        alpha: 0.0,
        turbulence_intensity: 0.0,
        law: WindLaw::Blended,
        direction_deg: 0.0,
    };
    if !(ratio_at(lo) <= target && target <= ratio_at(hi)) {
        profile.z0 = if target < ratio_at(lo) { Z0_BOUNDS.0 } else { hi.exp() };
        profile.alpha = fit_exponent(&profile, z_b)?;
        return Err(failure("no roughness length in [1e-6, 1] m matches the middle sample", &profile));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    profile.z0 = (0.5 * (lo + hi)).exp();
    profile.alpha = fit_exponent(&profile, z_b)?;

    let v_log = profile.v_log(z_c);
    let spread = v_log - profile.v_exp(z_c);
    let k = if spread.abs() < 1e-12 {
        if (v_c - v_log).abs() < 1e-9 {
            0.0
        } else {
            return Err(failure("top sample is not reachable by any blend coefficient", &profile));
        }
    } else {
        (v_c - v_log) / spread
    };
    profile.k_blend = k;
    if !(K_BOUNDS.0..=K_BOUNDS.1).contains(&k) {
        profile.k_blend = k.clamp(K_BOUNDS.0, K_BOUNDS.1);
        return Err(failure("blend coefficient outside [-5, 5]", &profile));
    }
    let r = residuals(&profile);
    if r.iter().any(|x| x.abs() > 1e-6) {
        return Err(failure("residual above 1e-6 m/s", &profile));
    }
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirDensityModel {
    pub rho0: f64,
    pub scale_height: f64,
}

impl Default for AirDensityModel {
    fn default() -> Self {
        Self { rho0: 1.225, scale_height: 8550.0 }
    }
}

impl AirDensityModel {
    pub fn validate(&self) -> Result<(), AtmosphereError> {
        if !(self.rho0 > 0.0 && self.scale_height > 0.0) {
            return Err(AtmosphereError::InvalidProfile("rho0 and scale_height must be positive".into()));
        }
        Ok(())
    }
}

pub fn air_density(model: &AirDensityModel, z: f64) -> Result<f64, AtmosphereError> {
    if !z.is_finite() || z < 0.0 {
        return Err(AtmosphereError::Domain(z));
    }
    Ok(model.rho0 * (-z / model.scale_height).exp())
}

/// Low-pass filtered Gaussian noise with unit variance.
///
/// The state is an Ornstein-Uhlenbeck process sampled exactly, so the
/// stationary variance does not depend on the sampling interval.
#[derive(Debug, Clone)]
pub struct Turbulence {
    time_constant: f64,
    rng: ChaCha8Rng,
    state: f64,
    t_last: f64,
}

impl Turbulence {
    pub const DEFAULT_TIME_CONSTANT: f64 = 2.0;

    pub fn new(seed: u64, time_constant: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state: f64 = StandardNormal.sample(&mut rng);
        Self { time_constant, rng, state, t_last: 0.0 }
    }

    /// Advances the process to time `t` and returns the normalized perturbation.
    /// Times earlier than the last sample return the current value.
    pub fn sample(&mut self, t: f64) -> f64 {
        let dt = t - self.t_last;
        if dt > 0.0 {
            let decay = (-dt / self.time_constant).exp();
            let n: f64 = StandardNormal.sample(&mut self.rng);
            self.state = self.state * decay + (1.0 - decay * decay).sqrt() * n;
            self.t_last = t;
        }
        self.state
    }

    pub fn value(&self) -> f64 {
        self.state
    }
}

/// Wind field of one simulation: mean profile plus an optional turbulent
/// speed factor that is frozen between calls to [`WindField::advance`].
#[derive(Debug, Clone)]
pub struct WindField {
    pub profile: WindProfile,
    turbulence: Turbulence,
    factor: f64,
}

impl WindField {
    pub fn new(profile: WindProfile, seed: u64) -> Self {
        let turbulence = Turbulence::new(seed, Turbulence::DEFAULT_TIME_CONSTANT);
        let factor = 1.0 + profile.turbulence_intensity * turbulence.value();
        Self { profile, turbulence, factor }
    }

    /// Moves the turbulence to time `t`; the speed factor then stays fixed
    /// until the next call.
    pub fn advance(&mut self, t: f64) {
        let n = self.turbulence.sample(t);
        self.factor = 1.0 + self.profile.turbulence_intensity * n;
    }

    pub fn speed_factor(&self) -> f64 {
        self.factor
    }

    /// Wind velocity at height `z` using the current turbulence factor.
    pub fn velocity_at(&self, z: f64) -> Vec3 {
        let mean = wind_speed_clamped(&self.profile, z, self.profile.law);
        self.profile.direction() * (mean * self.factor)
    }

    /// Advances to `t` and returns the wind vector at height `z`.
    pub fn wind_vector(&mut self, z: f64, t: f64) -> Vec3 {
        self.advance(t);
        self.velocity_at(z)
    }
}

/// Wind and density lookup used by the force models.
pub trait AirSource {
    fn wind_at(&self, z: f64) -> Vec3;
    fn density_at(&self, z: f64) -> f64;
}

/// Atmosphere snapshot: a wind field with its current turbulence factor plus
/// the density model. Heights below ground use ground density.
#[derive(Debug, Clone, Copy)]
pub struct Air<'a> {
    pub wind: &'a WindField,
    pub density: &'a AirDensityModel,
}

impl AirSource for Air<'_> {
    fn wind_at(&self, z: f64) -> Vec3 {
        self.wind.velocity_at(z)
    }

    fn density_at(&self, z: f64) -> f64 {
        air_density(self.density, z.max(0.0)).unwrap_or(self.density.rho0)
    }
}

/// Uniform air, handy for tests and tether-only studies.
#[derive(Debug, Clone, Copy)]
pub struct UniformAir {
    pub wind: Vec3,
    pub rho: f64,
}

impl AirSource for UniformAir {
    fn wind_at(&self, _z: f64) -> Vec3 {
        self.wind
    }

    fn density_at(&self, _z: f64) -> f64 {
        self.rho
    }
}

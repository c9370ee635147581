//! Lumped-mass tether: `n` spring-damper segments between `n + 1` particles.
//!
//! Reeling changes the rest length of every segment instead of adding or
//! removing particles, so the particle count stays fixed for the whole run.
//! Particle 0 sits on the ground station; the last particle is where the kite
//! (or the kite control unit of the four-point kite) is attached.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::AirSource;
use crate::{gravity, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TetherError {
    #[error("segment rest length {0} m is not positive; reel-in exhausted")]
    ReelInExhausted(f64),
    #[error("segment {segment} has coincident end points")]
    SingularGeometry { segment: usize },
    #[error("invalid tether parameters: {0}")]
    InvalidParams(String),
    #[error("state has {got} particles, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Below this distance two particles are considered coincident.
pub const COINCIDENT_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TetherParams {
    pub n_segments: usize,
    /// Diameter, m.
    pub diameter: f64,
    /// Mass per length, kg/m.
    pub sigma: f64,
    /// Unit spring constant (axial stiffness times length), N.
    pub k0: f64,
    /// Unit damping coefficient, N·s.
    pub c0: f64,
    /// Cylinder drag coefficient.
    pub cd: f64,
    /// Stiffness multiplier while a segment is shorter than its rest length.
    pub compression_factor: f64,
    /// Rest lengths are floored to this value, m.
    pub min_segment_length: f64,
}

impl Default for TetherParams {
    fn default() -> Self {
        Self {
            n_segments: 7,
            diameter: 0.004,
            sigma: 0.013,
            k0: 614_600.0,
            c0: 473.0,
            cd: 0.96,
            compression_factor: 0.1,
            min_segment_length: 1.0,
        }
    }
}

impl TetherParams {
    pub fn validate(&self) -> Result<(), TetherError> {
        let bad = |m: &str| Err(TetherError::InvalidParams(m.into()));
        if self.n_segments < 1 {
            return bad("at least one segment is required");
        }
        if !(self.diameter > 0.0 && self.sigma > 0.0 && self.k0 > 0.0 && self.cd > 0.0) {
            return bad("diameter, sigma, k0 and cd must be positive");
        }
        if !(self.c0 >= 0.0) {
            return bad("c0 must be non-negative");
        }
        if !(self.compression_factor > 0.0 && self.compression_factor <= 1.0) {
            return bad("compression_factor must be in (0, 1]");
        }
        if !(self.min_segment_length > 0.0) {
            return bad("min_segment_length must be positive");
        }
        Ok(())
    }

    /// Validation for the segmented (multi-particle) layout.
    pub fn validate_segmented(&self) -> Result<(), TetherError> {
        self.validate()?;
        if self.n_segments < 2 {
            return Err(TetherError::InvalidParams("a segmented tether needs at least two segments".into()));
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.n_segments + 1
    }
}

/// Tether length and reel-out speed latched at the start of a reeling interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReelState {
    pub l_t_i: f64,
    pub v_t_o: f64,
    pub t_i: f64,
}

/// Rest length of one segment at time `t` of a reeling interval.
pub fn segment_rest_length(reel: &ReelState, t: f64, n: usize) -> Result<f64, TetherError> {
    let l_s = (reel.l_t_i + reel.v_t_o * (t - reel.t_i)) / n as f64;
    if l_s <= 0.0 || !l_s.is_finite() {
        return Err(TetherError::ReelInExhausted(l_s));
    }
    Ok(l_s)
}

/// Spring and damping constants of a segment of rest length `l_s`.
pub fn segment_constants(params: &TetherParams, l_s: f64) -> (f64, f64) {
    (params.k0 / l_s, params.c0 / l_s)
}

/// Geometry and constants of one spring-damper element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentState {
    /// Vector from the lower particle to the upper particle.
    pub s: Vec3,
    /// Velocity of the upper particle relative to the lower one.
    pub s_v: Vec3,
    pub l_s: f64,
    pub k: f64,
    pub c: f64,
}

/// Spring-damper force on the lower particle of a segment; the upper particle
/// receives the negated force. Positive tension pulls the particles together.
pub fn spring_force(seg: &SegmentState, compression_factor: f64) -> Result<Vec3, TetherError> {
    let len = seg.s.norm();
    if len < COINCIDENT_DISTANCE {
        return Err(TetherError::SingularGeometry { segment: 0 });
    }
    let unit = seg.s / len;
    let k = if len < seg.l_s { seg.k * compression_factor } else { seg.k };
    let tension = k * (len - seg.l_s) + seg.c * unit.dot(&seg.s_v);
    Ok(unit * tension)
}

/// Aerodynamic drag of one segment, perpendicular to the segment.
pub fn segment_drag(
    wind: &Vec3,
    v_lower: &Vec3,
    v_upper: &Vec3,
    s: &Vec3,
    rho: f64,
    params: &TetherParams,
) -> Result<Vec3, TetherError> {
    let len = s.norm();
    if len < COINCIDENT_DISTANCE {
        return Err(TetherError::SingularGeometry { segment: 0 });
    }
    let unit = s / len;
    let v_segment = 0.5 * (v_upper + v_lower);
    let v_app = wind - v_segment;
    let v_perp = v_app - unit * v_app.dot(&unit);
    Ok(v_perp * (0.5 * params.cd * rho * v_perp.norm() * len * params.diameter))
}

/// Per-particle loads of the tether.
#[derive(Debug, Clone, PartialEq)]
pub struct TetherLoads {
    /// Total force on each particle: springs, half of the adjacent segment
    /// drags and gravity.
    pub forces: Vec<Vec3>,
    /// Lumped particle masses, kg.
    pub masses: Vec<f64>,
    /// Force the tether exerts on the ground station (the load on particle 0).
    pub ground_force: Vec3,
    /// Axial tension of each segment, N.
    pub tensions: Vec<f64>,
    /// Rest length used for every segment, m.
    pub rest_length: f64,
}

/// Rest length actually used by the force model, with the minimum floor.
pub fn effective_rest_length(params: &TetherParams, tether_length: f64) -> f64 {
    (tether_length / params.n_segments as f64).max(params.min_segment_length)
}

/// Evaluates all tether forces for a total unstretched length `tether_length`.
pub fn particle_forces(
    positions: &[Vec3],
    velocities: &[Vec3],
    tether_length: f64,
    air: &dyn AirSource,
    params: &TetherParams,
) -> Result<TetherLoads, TetherError> {
    let n = params.n_segments;
    if positions.len() != n + 1 || velocities.len() != n + 1 {
        return Err(TetherError::Dimension { expected: n + 1, got: positions.len() });
    }
    let l_s = effective_rest_length(params, tether_length);
    let (k, c) = segment_constants(params, l_s);
    let g = gravity();

    let mut forces = vec![Vec3::zeros(); n + 1];
    let mut masses = vec![params.sigma * l_s; n + 1];
    masses[0] *= 0.5;
    masses[n] *= 0.5;
    let mut tensions = vec![0.0; n];

    for i in 0..n {
        let s = positions[i + 1] - positions[i];
        let seg = SegmentState { s, s_v: velocities[i + 1] - velocities[i], l_s, k, c };
        let f =
            spring_force(&seg, params.compression_factor).map_err(|_| TetherError::SingularGeometry { segment: i })?;
        let z_mid = 0.5 * (positions[i + 1].z + positions[i].z);
        let d =
            segment_drag(&air.wind_at(z_mid), &velocities[i], &velocities[i + 1], &s, air.density_at(z_mid), params)
                .map_err(|_| TetherError::SingularGeometry { segment: i })?;
        tensions[i] = f.dot(&s) / s.norm();
        forces[i] += f + 0.5 * d;
        forces[i + 1] += -f + 0.5 * d;
    }
    for (f, m) in forces.iter_mut().zip(&masses) {
        *f += g * *m;
    }
    Ok(TetherLoads { ground_force: forces[0], forces, masses, tensions, rest_length: l_s })
}

/// A tether anchored at particle 0 with a prescribed reeling schedule and a
/// free upper end. Used for tether-only studies and as an oracle for the
/// coupled system.
#[derive(Debug, Clone)]
pub struct AnchoredTether<A: AirSource> {
    pub params: TetherParams,
    pub reel: ReelState,
    pub air: A,
}

impl<A: AirSource> AnchoredTether<A> {
    pub fn dim(&self) -> usize {
        6 * self.params.n_particles()
    }

    pub fn tether_length(&self, t: f64) -> Result<f64, TetherError> {
        Ok(segment_rest_length(&self.reel, t, self.params.n_segments)? * self.params.n_segments as f64)
    }

    /// Splits a state vector `(p_0..p_n, v_0..v_n)` into particle vectors.
    pub fn unpack(&self, y: &[f64]) -> (Vec<Vec3>, Vec<Vec3>) {
        let np = self.params.n_particles();
        let p = (0..np).map(|i| Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2])).collect();
        let off = 3 * np;
        let v = (0..np).map(|i| Vec3::new(y[off + 3 * i], y[off + 3 * i + 1], y[off + 3 * i + 2])).collect();
        (p, v)
    }

    pub fn pack(positions: &[Vec3], velocities: &[Vec3]) -> Vec<f64> {
        positions.iter().chain(velocities).flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    /// Time derivative of the state; particle 0 is held at rest.
    pub fn derivative(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), TetherError> {
        let np = self.params.n_particles();
        let (p, v) = self.unpack(y);
        let loads = particle_forces(&p, &v, self.tether_length(t)?, &self.air, &self.params)?;
        let off = 3 * np;
        for i in 0..np {
            let (vel, acc) =
                if i == 0 { (Vec3::zeros(), Vec3::zeros()) } else { (v[i], loads.forces[i] / loads.masses[i]) };
            for j in 0..3 {
                dy[3 * i + j] = vel[j];
                dy[off + 3 * i + j] = acc[j];
            }
        }
        Ok(())
    }

    /// Residual `(R_p, R_v) = (v − ṗ, a − v̇)`; zero exactly when the
    /// derivative is consistent with Newton's law.
    pub fn residual(&self, t: f64, y: &[f64], ydot: &[f64]) -> Result<Vec<f64>, TetherError> {
        let mut model = vec![0.0; y.len()];
        self.derivative(t, y, &mut model)?;
        Ok(model.iter().zip(ydot).map(|(m, d)| m - d).collect())
    }

    /// Total mechanical energy: kinetic, gravitational (relative to z = 0)
    /// and elastic energy of the stretched segments.
    pub fn energy(&self, t: f64, y: &[f64]) -> Result<f64, TetherError> {
        let (p, v) = self.unpack(y);
        let l_s = effective_rest_length(&self.params, self.tether_length(t)?);
        let (k, _) = segment_constants(&self.params, l_s);
        let mut masses = vec![self.params.sigma * l_s; p.len()];
        let last = masses.len() - 1;
        masses[0] *= 0.5;
        masses[last] *= 0.5;
        let g = crate::G_EARTH;
        let mut e = 0.0;
        for i in 0..p.len() {
            e += 0.5 * masses[i] * v[i].norm_squared() + masses[i] * g * p[i].z;
        }
        for i in 0..last {
            let stretch = (p[i + 1] - p[i]).norm() - l_s;
            let k_eff = if stretch < 0.0 { k * self.params.compression_factor } else { k };
            e += 0.5 * k_eff * stretch * stretch;
        }
        Ok(e)
    }
}

/// Static equilibrium of a tether hanging straight down from the anchor,
/// built segment by segment from the weight carried below each segment.
pub fn hanging_equilibrium(params: &TetherParams, tether_length: f64) -> Vec<Vec3> {
    let n = params.n_segments;
    let l_s = effective_rest_length(params, tether_length);
    let (k, _) = segment_constants(params, l_s);
    let m_inner = params.sigma * l_s;
    let mut positions = vec![Vec3::zeros(); n + 1];
    for i in 0..n {
        // particles i+1..=n hang below segment i
        let below = (n - i - 1) as f64 * m_inner + 0.5 * m_inner;
        let tension = below * crate::G_EARTH;
        positions[i + 1] = positions[i] - Vec3::z() * (l_s + tension / k);
    }
    positions
}

//! Four-point kite: particles A (nose), B (top), C (right tip) and D (left
//! tip), held by a bridle to the kite control unit, which is the last tether
//! particle. Lift and drag act on surfaces attached to B, C and D; A only
//! carries mass, which gives the wing rotational inertia.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::kite_one_point::{depower_angle, AeroTable, KiteError, KiteFrame, KiteParams, MIN_APPARENT_SPEED};
use crate::tether::{TetherParams, COINCIDENT_DISTANCE};
use crate::Vec3;

pub const A: usize = 0;
pub const B: usize = 1;
pub const C: usize = 2;
pub const D: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourPointGeometry {
    /// Kite height, distance from the centre point to B, m.
    pub h_k: f64,
    /// Bridle height, distance from the KCU to the centre point, m.
    pub h_b: f64,
    /// Tip-to-tip width, m.
    pub w_k: f64,
    /// Nose mass fraction.
    pub gamma: f64,
    /// Nose distance relative to the effective width.
    pub d_nr: f64,
    /// Effective width relative to the tip-to-tip width.
    pub w_rel: f64,
    /// Incidence of the side surfaces, degrees.
    pub alpha_s0_deg: f64,
    /// Steering angle at full steering input, degrees.
    pub alpha_s_max_deg: f64,
    /// Reduction of steering sensitivity with depower.
    pub k_ds: f64,
    /// Drag compensation factor of the side surfaces.
    pub kappa: f64,
    /// Steering offset.
    pub u_s0: f64,
    /// Bridle line diameter, m.
    pub bridle_diameter: f64,
}

impl Default for FourPointGeometry {
    fn default() -> Self {
        Self {
            h_k: 2.23,
            h_b: 4.9,
            w_k: 5.77,
            gamma: 0.47,
            d_nr: 0.2,
            w_rel: 0.91,
            alpha_s0_deg: 10.0,
            alpha_s_max_deg: 15.9,
            k_ds: 1.5,
            kappa: 0.93,
            u_s0: -0.003,
            bridle_diameter: 0.0025,
        }
    }
}

impl FourPointGeometry {
    pub fn validate(&self) -> Result<(), KiteError> {
        let bad = |m: &str| Err(KiteError::InvalidParams(m.into()));
        if !(self.h_k > 0.0 && self.h_b > 0.0 && self.w_k > 0.0 && self.d_nr > 0.0 && self.bridle_diameter > 0.0) {
            return bad("kite lengths must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0 && self.w_rel > 0.0 && self.w_rel < 1.0) {
            return bad("gamma and w_rel must be in (0, 1)");
        }
        if !(1.0..=2.0).contains(&self.k_ds) {
            return bad("k_ds must be in [1, 2]");
        }
        if !(self.kappa > 0.0 && self.alpha_s_max_deg > 0.0 && self.alpha_s0_deg.is_finite() && self.u_s0.is_finite()) {
            return bad("kappa and alpha_s_max must be positive");
        }
        Ok(())
    }

    /// Distance between the steering surfaces C and D, m.
    pub fn span(&self) -> f64 {
        self.w_k * self.w_rel
    }
}

/// Masses of the KCU particle and of the four wing particles, kg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KiteMasses {
    pub kcu: f64,
    pub wing: [f64; 4],
}

pub fn distribute_mass(m_k: f64, m_kcu: f64, gamma: f64, l_t: f64, sigma: f64, n: usize) -> KiteMasses {
    let rest = (1.0 - gamma) * m_k;
    KiteMasses { kcu: m_kcu + l_t * sigma / (2.0 * n as f64), wing: [gamma * m_k, 0.4 * rest, 0.3 * rest, 0.3 * rest] }
}

/// Positions and velocities of A, B, C and D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KiteBody {
    pub pos: [Vec3; 4],
    pub vel: [Vec3; 4],
}

impl KiteBody {
    pub fn centre(&self) -> Vec3 {
        centre(&self.pos)
    }
}

fn centre(pos: &[Vec3; 4]) -> Vec3 {
    0.5 * (pos[C] + pos[D])
}

/// Wing particle positions for a KCU at `p_kcu` and an initial kite frame.
pub fn init_particles(p_kcu: &Vec3, frame0: &KiteFrame, geo: &FourPointGeometry) -> [Vec3; 4] {
    let p_c = p_kcu - geo.h_b * frame0.e_z;
    let half = 0.5 * geo.span();
    [
        p_c + geo.d_nr * geo.span() * frame0.e_x,
        p_c - geo.h_k * frame0.e_z,
        p_c + half * frame0.e_y,
        p_c - half * frame0.e_y,
    ]
}

/// Kite frame of the deformed wing. `e_x` is normalized, so it stays a unit
/// vector even when `e_y` and `e_z` are not exactly orthogonal.
pub fn frame_4p(pos: &[Vec3; 4]) -> Result<KiteFrame, KiteError> {
    let z = centre(pos) - pos[B];
    let y = pos[C] - pos[D];
    if z.norm() < COINCIDENT_DISTANCE || y.norm() < COINCIDENT_DISTANCE {
        return Err(KiteError::SingularFrame("wing particles coincide"));
    }
    let e_z = z.normalize();
    let e_y = y.normalize();
    let x = e_y.cross(&e_z);
    if x.norm() < 1e-9 {
        return Err(KiteError::SingularFrame("span and height are parallel"));
    }
    Ok(KiteFrame { e_x: x.normalize(), e_y, e_z })
}

/// Change of the side-surface incidence produced by the steering input.
pub fn steering_angle(u_s: f64, u_d: f64, geo: &FourPointGeometry, params: &KiteParams) -> f64 {
    let alpha_d = depower_angle(u_d, params);
    (u_s - geo.u_s0) / (1.0 + geo.k_ds * alpha_d / params.alpha_d_max()) * geo.alpha_s_max_deg.to_radians()
}

/// Drag factor that gives the straight-flying four-point kite the lift-to-drag
/// ratio of the point-mass kite.
pub fn drag_factor(geo: &FourPointGeometry, params: &KiteParams) -> f64 {
    (1.0 - params.side_area_ratio) * geo.kappa
}

/// Apparent wind and angle of attack of one surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFlow {
    pub v_a: Vec3,
    /// Apparent wind projected on the plane that sets the angle of attack.
    pub v_proj: Vec3,
    pub alpha: f64,
}

fn angle_from_heading(v_proj: &Vec3, e_x: &Vec3) -> f64 {
    PI - (v_proj.dot(e_x) / v_proj.norm()).clamp(-1.0, 1.0).acos()
}

fn surface(v_a: Vec3, normal: &Vec3, e_x: &Vec3, offset: f64) -> Option<SurfaceFlow> {
    let v_proj = v_a - v_a.dot(normal) * normal;
    if v_proj.norm() < MIN_APPARENT_SPEED {
        return None;
    }
    Some(SurfaceFlow { v_a, v_proj, alpha: angle_from_heading(&v_proj, e_x) + offset })
}

/// Flow over the top surface (B) and the side surfaces (C, D); `None` where
/// the projected apparent speed vanishes.
pub fn surface_flows(
    body: &KiteBody,
    frame: &KiteFrame,
    winds: &[Vec3; 3],
    u_s: f64,
    u_d: f64,
    geo: &FourPointGeometry,
    params: &KiteParams,
) -> [Option<SurfaceFlow>; 3] {
    let alpha_d = depower_angle(u_d, params);
    let alpha_s = steering_angle(u_s, u_d, geo, params);
    let alpha_s0 = geo.alpha_s0_deg.to_radians();
    [
        surface(winds[0] - body.vel[B], &frame.e_y, &frame.e_x, -alpha_d + params.alpha0()),
        surface(winds[1] - body.vel[C], &frame.e_z, &frame.e_x, -alpha_s + alpha_s0),
        surface(winds[2] - body.vel[D], &frame.e_z, &frame.e_x, alpha_s + alpha_s0),
    ]
}

/// Angles of attack and apparent winds of B, C and D.
pub fn surface_aoa(
    body: &KiteBody,
    frame: &KiteFrame,
    winds: &[Vec3; 3],
    u_s: f64,
    u_d: f64,
    geo: &FourPointGeometry,
    params: &KiteParams,
) -> Result<[SurfaceFlow; 3], KiteError> {
    let flows = surface_flows(body, frame, winds, u_s, u_d, geo, params);
    let name = ["B", "C", "D"];
    let mut out = [SurfaceFlow { v_a: Vec3::zeros(), v_proj: Vec3::zeros(), alpha: 0.0 }; 3];
    for i in 0..3 {
        out[i] = flows[i].ok_or(KiteError::Stagnation(name[i]))?;
    }
    Ok(out)
}

/// Aerodynamic forces on B, C and D. Surfaces without flow get zero force.
pub fn aero_forces_4p(
    flows: &[Option<SurfaceFlow>; 3],
    frame: &KiteFrame,
    rho: &[f64; 3],
    table: &AeroTable,
    geo: &FourPointGeometry,
    params: &KiteParams,
) -> [Vec3; 3] {
    let k_d = drag_factor(geo, params);
    let side_area = params.area * params.side_area_ratio;
    let mut forces = [Vec3::zeros(); 3];
    for (i, flow) in flows.iter().enumerate() {
        let Some(f) = flow else { continue };
        let (area, lift_dir) = match i {
            0 => (params.area, f.v_a.cross(&frame.e_y)),
            1 => (side_area, f.v_a.cross(&frame.e_z)),
            _ => (side_area, frame.e_z.cross(&f.v_a)),
        };
        let (c_l, c_d) = table.coefficients(f.alpha);
        let q = 0.5 * rho[i] * area;
        let ln = lift_dir.norm();
        let lift = if ln > 0.0 { lift_dir * (q * f.v_proj.norm_squared() * c_l / ln) } else { Vec3::zeros() };
        let va = f.v_a.norm();
        let drag = f.v_a * (q * k_d * va * c_d);
        forces[i] = lift + drag;
    }
    forces
}

/// A spring-damper element inside the kite or bridle. Indices address the
/// local particle list `[KCU, A, B, C, D]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalSpring {
    pub i: usize,
    pub j: usize,
    pub rest_length: f64,
    pub k: f64,
    pub c: f64,
}

/// Complete graph over the wing particles plus bridle lines from the KCU to
/// each wing particle, relaxed in the given configuration.
pub fn internal_springs(
    p_kcu: &Vec3,
    wing: &[Vec3; 4],
    geo: &FourPointGeometry,
    tether: &TetherParams,
) -> Vec<InternalSpring> {
    let scale = (geo.bridle_diameter / tether.diameter).powi(2);
    let k0 = tether.k0 * scale;
    let c0 = tether.c0 * scale;
    let pts = [*p_kcu, wing[A], wing[B], wing[C], wing[D]];
    let mut springs = Vec::with_capacity(10);
    for i in 0..5 {
        for j in (i + 1)..5 {
            let l = (pts[j] - pts[i]).norm();
            springs.push(InternalSpring { i, j, rest_length: l, k: k0 / l, c: c0 / l });
        }
    }
    springs
}

/// Forces of the internal springs on `[KCU, A, B, C, D]`.
pub fn internal_forces(
    springs: &[InternalSpring],
    pos: &[Vec3; 5],
    vel: &[Vec3; 5],
    compression_factor: f64,
) -> Result<[Vec3; 5], KiteError> {
    let mut f = [Vec3::zeros(); 5];
    for s in springs {
        let d = pos[s.j] - pos[s.i];
        let len = d.norm();
        if len < COINCIDENT_DISTANCE {
            return Err(KiteError::SingularFrame("bridle particles coincide"));
        }
        let u = d / len;
        let k = if len < s.rest_length { s.k * compression_factor } else { s.k };
        let t = k * (len - s.rest_length) + s.c * u.dot(&(vel[s.j] - vel[s.i]));
        f[s.i] += u * t;
        f[s.j] -= u * t;
    }
    Ok(f)
}

//! Point-mass kite: the wing is lumped into the last tether particle and is
//! assumed to be aligned with the apparent wind (no sideslip).
//!
//! The kite frame has `e_z` along the last tether segment (pointing down the
//! tether), `e_y` spanwise and `e_x` along the heading.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{gravity, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KiteError {
    #[error("apparent wind is aligned with the tether; kite frame undefined")]
    DegenerateFlow,
    #[error("apparent wind speed is zero at {0}")]
    Stagnation(&'static str),
    #[error("kite geometry is degenerate: {0}")]
    SingularFrame(&'static str),
    #[error("invalid kite parameters: {0}")]
    InvalidParams(String),
    #[error("invalid aerodynamic table: {0}")]
    InvalidTable(String),
}

/// Apparent speeds below this value count as stagnation.
pub const MIN_APPARENT_SPEED: f64 = 1e-9;

/// Floor for the apparent speed in the gravity correction term, m/s.
pub const CORRECTION_SPEED_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KiteParams {
    /// Projected wing area, m².
    pub area: f64,
    /// Wing mass including sensors, kg.
    pub mass: f64,
    /// Kite control unit mass, kg.
    pub kcu_mass: f64,
    /// Side area relative to the projected area.
    pub side_area_ratio: f64,
    /// Steering coefficient of the point-mass model.
    pub c_s: f64,
    /// Gravity correction factor of the point-mass model.
    pub c_2c: f64,
    /// Increase of drag per unit of absolute steering input.
    pub k_sd: f64,
    /// Kite-tether angle of the fully powered wing, degrees.
    pub alpha0_deg: f64,
    /// Depower angle at `u_d_max`, degrees.
    pub alpha_d_max_deg: f64,
    /// Depower setting of the fully powered wing.
    pub u_d0: f64,
    /// Depower setting of the fully depowered wing.
    pub u_d_max: f64,
}

impl Default for KiteParams {
    fn default() -> Self {
        Self {
            area: 10.18,
            mass: 6.21,
            kcu_mass: 8.4,
            side_area_ratio: 0.306,
            c_s: 2.59,
            c_2c: 0.93,
            k_sd: 0.6,
            alpha0_deg: 9.0,
            alpha_d_max_deg: 31.0,
            u_d0: 0.213,
            u_d_max: 0.4247,
        }
    }
}

impl KiteParams {
    pub fn validate(&self) -> Result<(), KiteError> {
        let bad = |m: &str| Err(KiteError::InvalidParams(m.into()));
        if !(self.area > 0.0 && self.mass > 0.0 && self.kcu_mass > 0.0) {
            return bad("area and masses must be positive");
        }
        if !(0.0 < self.u_d0 && self.u_d0 < self.u_d_max && self.u_d_max <= 1.0) {
            return bad("need 0 < u_d0 < u_d_max <= 1");
        }
        if !(self.side_area_ratio > 0.0 && self.side_area_ratio < 1.0) {
            return bad("side_area_ratio must be in (0, 1)");
        }
        if !(self.c_s.is_finite() && self.c_2c.is_finite() && self.k_sd >= 0.0) {
            return bad("c_s and c_2c must be finite, k_sd non-negative");
        }
        if !(self.alpha0_deg.is_finite() && self.alpha_d_max_deg > 0.0) {
            return bad("alpha0 must be finite and alpha_d_max positive");
        }
        Ok(())
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0_deg.to_radians()
    }

    pub fn alpha_d_max(&self) -> f64 {
        self.alpha_d_max_deg.to_radians()
    }
}

/// Lift and drag coefficients as piecewise-linear functions of the angle of
/// attack. Stored as `[alpha_deg, c_l, c_d]` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroTable {
    pub points: Vec<[f64; 3]>,
}

impl Default for AeroTable {
    fn default() -> Self {
        Self {
            points: vec![
                [-180.0, 0.0, 0.5],
                [-160.0, 0.5, 0.5],
                [-90.0, 0.0, 1.0],
                [-20.0, 0.08, 0.2],
                [-10.0, 0.125, 0.15],
                [-5.0, 0.15, 0.125],
                [0.0, 0.2, 0.1],
                [20.0, 1.0, 0.2],
                [40.0, 1.0, 0.4286],
                [90.0, 0.0, 1.0],
                [160.0, -0.5, 0.6111],
                [180.0, 0.0, 0.5],
            ],
        }
    }
}

impl AeroTable {
    pub fn validate(&self) -> Result<(), KiteError> {
        if self.points.len() < 2 {
            return Err(KiteError::InvalidTable("need at least two control points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return Err(KiteError::InvalidTable(format!("alpha grid not increasing at {} deg", w[1][0])));
            }
        }
        for p in &self.points {
            if !(p[2] > 0.0) || !p[1].is_finite() {
                return Err(KiteError::InvalidTable(format!("bad coefficients at {} deg", p[0])));
            }
        }
        Ok(())
    }

    /// `(C_L, C_D)` at `alpha` (radians), clamped at the ends of the grid.
    pub fn coefficients(&self, alpha: f64) -> (f64, f64) {
        let a = alpha.to_degrees();
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if a <= first[0] {
            return (first[1], first[2]);
        }
        if a >= last[0] {
            return (last[1], last[2]);
        }
        let i = pts.partition_point(|p| p[0] <= a) - 1;
        let (p, q) = (pts[i], pts[i + 1]);
        let w = (a - p[0]) / (q[0] - p[0]);
        (p[1] + w * (q[1] - p[1]), p[2] + w * (q[2] - p[2]))
    }
}

pub fn aero_coefficients(table: &AeroTable, alpha: f64) -> (f64, f64) {
    table.coefficients(alpha)
}

/// Orthonormal kite frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KiteFrame {
    pub e_x: Vec3,
    pub e_y: Vec3,
    pub e_z: Vec3,
}

impl KiteFrame {
    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let v = [self.e_x, self.e_y, self.e_z];
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v[i].dot(&v[j]) - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        self.e_x.cross(&self.e_y).dot(&self.e_z)
    }
}

/// Frame of the point-mass kite from the last tether segment (pointing from
/// the second-to-last particle to the kite) and the apparent wind.
pub fn kite_frame(s_last: &Vec3, v_a: &Vec3) -> Result<KiteFrame, KiteError> {
    let len = s_last.norm();
    if len < 1e-9 {
        return Err(KiteError::SingularFrame("last tether segment has zero length"));
    }
    let e_z = -s_last / len;
    let cross = v_a.cross(&e_z);
    let c = cross.norm();
    if c < 1e-9 * v_a.norm() || c == 0.0 {
        return Err(KiteError::DegenerateFlow);
    }
    let e_y = cross / c;
    let e_x = e_y.cross(&e_z);
    Ok(KiteFrame { e_x, e_y, e_z })
}

/// Depower angle for the depower setting `u_d`, radians.
pub fn depower_angle(u_d: f64, params: &KiteParams) -> f64 {
    (u_d - params.u_d0) / (params.u_d_max - params.u_d0) * params.alpha_d_max()
}

/// Angle of attack of the point-mass kite.
///
/// The flow angle is the signed angle between the incoming flow `−v_a` and
/// the heading, positive when the air hits the lower side of the wing.
pub fn angle_of_attack_1p(v_a: &Vec3, frame: &KiteFrame, u_d: f64, params: &KiteParams) -> Result<f64, KiteError> {
    if v_a.norm() < MIN_APPARENT_SPEED {
        return Err(KiteError::Stagnation("kite"));
    }
    let flow = (-v_a.dot(&frame.e_z)).atan2(-v_a.dot(&frame.e_x));
    Ok(flow - depower_angle(u_d, params) + params.alpha0())
}

/// Steering input that compensates part of the gravity-induced turn rate.
pub fn steering_correction(v_a: f64, psi: f64, beta: f64, c_2c: f64) -> f64 {
    c_2c / v_a.max(CORRECTION_SPEED_FLOOR) * psi.sin() * beta.cos()
}

/// Flow quantities the point-mass force model needs.
#[derive(Debug, Clone, Copy)]
pub struct FlowState {
    pub v_a: Vec3,
    pub frame: KiteFrame,
    pub rho: f64,
    /// Heading angle in the tangent plane, radians.
    pub psi: f64,
    /// Elevation angle, radians.
    pub beta: f64,
}

/// Steering and depower inputs of the kite control unit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KiteInputs {
    /// Commanded steering.
    pub i_s: f64,
    /// Actuated steering.
    pub u_s: f64,
    /// Actuated depower.
    pub u_d: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OnePointForces {
    pub lift: Vec3,
    pub drag: Vec3,
    pub side: Vec3,
    pub weight: Vec3,
    pub alpha: f64,
    pub c_l: f64,
    pub c_d: f64,
}

impl OnePointForces {
    pub fn total(&self) -> Vec3 {
        self.lift + self.drag + self.side + self.weight
    }

    pub fn aerodynamic(&self) -> Vec3 {
        self.lift + self.drag + self.side
    }
}

/// Lift, drag, side force and weight of the point-mass kite.
///
/// Positive steering pushes the wing towards `−e_y`, the same turn direction
/// as positive steering of the four-point kite. The gravity correction is
/// subtracted so that it weakens the gravity-induced turn.
pub fn forces_1p(
    flow: &FlowState,
    inputs: &KiteInputs,
    params: &KiteParams,
    table: &AeroTable,
) -> Result<OnePointForces, KiteError> {
    let v = flow.v_a.norm();
    if v < MIN_APPARENT_SPEED {
        return Err(KiteError::Stagnation("kite"));
    }
    let alpha = angle_of_attack_1p(&flow.v_a, &flow.frame, inputs.u_d, params)?;
    let (c_l, c_d) = table.coefficients(alpha);
    let q_a = 0.5 * flow.rho * v * v * params.area;

    let lift_dir = flow.v_a.cross(&flow.frame.e_y);
    let lift_norm = lift_dir.norm();
    let lift = if lift_norm > 0.0 { lift_dir * (q_a * c_l / lift_norm) } else { Vec3::zeros() };
    let drag = flow.v_a * (q_a * c_d * (1.0 + params.k_sd * inputs.u_s.abs()) / v);
    let i_sc = steering_correction(v, flow.psi, flow.beta, params.c_2c);
    let side = -flow.frame.e_y * (q_a * params.side_area_ratio * params.c_s * (inputs.i_s - i_sc));
    let weight = gravity() * (params.mass + params.kcu_mass);
    Ok(OnePointForces { lift, drag, side, weight, alpha, c_l, c_d })
}

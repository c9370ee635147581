//! Assembly of the coupled equations: tether particles, kite particles and
//! the winch, all in one first-order system.
//!
//! State layout: positions of all particles (tether particles `0..=n`, then
//! the wing particles A, B, C, D for the four-point kite), their velocities in
//! the same order, then tether length and reel-out speed. Particle 0 sits on
//! the drum and never moves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{Air, AirDensityModel, AirSource, WindField};
use crate::controller::{heading_angle, sphere_point};
use crate::kite_four_point::{
    aero_forces_4p, distribute_mass, frame_4p, init_particles, internal_forces, internal_springs, surface_flows,
    FourPointGeometry, InternalSpring, KiteBody, A, B, C, D,
};
use crate::kite_one_point::{
    forces_1p, kite_frame, AeroTable, FlowState, KiteError, KiteFrame, KiteInputs, KiteParams,
};
use crate::tether::{particle_forces, AnchoredTether, TetherError, TetherParams};
use crate::winch::{acceleration, WinchParams};
use crate::{gravity, Vec3};

use super::radau::OdeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("tether: {0}")]
    Tether(#[from] TetherError),
    #[error("kite: {0}")]
    Kite(#[from] KiteError),
    #[error("state entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KiteModel {
    #[serde(rename = "1p")]
    OnePoint,
    #[serde(rename = "4p")]
    FourPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TetherModel {
    /// A single spring-damper element.
    Straight,
    /// `n_segments` elements.
    Segmented,
}

/// Inputs held constant during one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs {
    pub i_s: f64,
    pub u_s: f64,
    pub u_d: f64,
    pub v_s: f64,
    /// Drum locked: tether length and reel-out speed frozen.
    pub brake: bool,
}

/// Everything the force models need, with the tether discretization fixed.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub kite_model: KiteModel,
    pub tether: TetherParams,
    pub kite: KiteParams,
    pub geometry: FourPointGeometry,
    pub aero: AeroTable,
    pub winch: WinchParams,
}

/// Observable quantities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Kite (1p) or KCU (4p) position.
    pub kite_position: Vec3,
    pub kite_velocity: Vec3,
    pub heading: Vec3,
    pub apparent_wind: Vec3,
    pub ground_force: f64,
    pub l_t: f64,
    pub v_t_o: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub psi: f64,
    pub particles: Vec<Vec3>,
}

/// The plant as a first-order ODE system.
#[derive(Debug, Clone)]
pub struct Plant {
    pub spec: PlantSpec,
    pub wind: WindField,
    pub density: AirDensityModel,
    pub inputs: PlantInputs,
    springs: Vec<InternalSpring>,
    /// Last valid frame of the point-mass kite, refreshed at interval boundaries.
    frame_hold: Option<KiteFrame>,
    /// Set when a derivative evaluation had to use the held frame.
    pub degenerate_frame_used: bool,
}

impl Plant {
    pub fn new(spec: PlantSpec, wind: WindField, density: AirDensityModel) -> Self {
        Self {
            spec,
            wind,
            density,
            inputs: PlantInputs::default(),
            springs: Vec::new(),
            frame_hold: None,
            degenerate_frame_used: false,
        }
    }

    pub fn n_segments(&self) -> usize {
        self.spec.tether.n_segments
    }

    pub fn n_particles(&self) -> usize {
        self.n_segments()
            + 1
            + match self.spec.kite_model {
                KiteModel::OnePoint => 0,
                KiteModel::FourPoint => 4,
            }
    }

    pub fn dim(&self) -> usize {
        6 * self.n_particles() + 2
    }

    fn air(&self) -> Air<'_> {
        Air { wind: &self.wind, density: &self.density }
    }

    /// State for a straight, unstretched tether from the drum to a kite at
    /// the given elevation and azimuth (radians), everything at rest. The
    /// four-point wing is attached using the point-mass kite frame.
    pub fn initial_state(&mut self, l_t: f64, elevation: f64, azimuth: f64) -> Result<Vec<f64>, ModelError> {
        let n = self.n_segments();
        let wind_dir = self.wind.profile.direction();
        let left = Vec3::z().cross(&wind_dir);
        let dir = wind_dir * (elevation.cos() * azimuth.cos()) - left * (elevation.cos() * azimuth.sin())
            + Vec3::z() * elevation.sin();
        let mut pos: Vec<Vec3> = (0..=n).map(|i| dir * (l_t * i as f64 / n as f64)).collect();
        let kite = pos[n];
        let v_a = self.air().wind_at(kite.z);
        let frame = kite_frame(&(dir * (l_t / n as f64)), &v_a)?;
        self.frame_hold = Some(frame);
        if self.spec.kite_model == KiteModel::FourPoint {
            let wing = init_particles(&kite, &frame, &self.spec.geometry);
            self.springs = internal_springs(&kite, &wing, &self.spec.geometry, &self.spec.tether);
            pos.extend_from_slice(&wing);
        }
        let np = pos.len();
        let mut y = AnchoredTether::<Air>::pack(&pos, &vec![Vec3::zeros(); np]);
        y.push(l_t);
        y.push(0.0);
        Ok(y)
    }

    /// Splits a state vector into particle positions, velocities, tether
    /// length and reel-out speed.
    pub fn unpack(&self, y: &[f64]) -> (Vec<Vec3>, Vec<Vec3>, f64, f64) {
        let np = self.n_particles();
        let at = |k: usize| Vec3::new(y[3 * k], y[3 * k + 1], y[3 * k + 2]);
        let p = (0..np).map(at).collect();
        let v = (np..2 * np).map(at).collect();
        (p, v, y[6 * np], y[6 * np + 1])
    }

    /// Refreshes the held point-mass kite frame from an accepted state.
    pub fn latch_frame(&mut self, y: &[f64]) {
        let (p, v, _, _) = self.unpack(y);
        let n = self.n_segments();
        let v_a = self.air().wind_at(p[n].z) - v[n];
        if let Ok(f) = kite_frame(&(p[n] - p[n - 1]), &v_a) {
            self.frame_hold = Some(f);
        }
    }

    /// Net force and mass of every particle plus the ground force magnitude.
    fn loads(&mut self, p: &[Vec3], v: &[Vec3], l_t: f64) -> Result<(Vec<Vec3>, Vec<f64>, f64), ModelError> {
        let n = self.n_segments();
        let spec = &self.spec;
        let air = Air { wind: &self.wind, density: &self.density };
        let tl = particle_forces(&p[..=n], &v[..=n], l_t, &air, &spec.tether)?;
        let mut forces = tl.forces;
        let mut masses = tl.masses;
        let ground = tl.ground_force.norm();
        let wind_dir = self.wind.profile.direction();
        match spec.kite_model {
            KiteModel::OnePoint => {
                let v_a = air.wind_at(p[n].z) - v[n];
                let rho = air.density_at(p[n].z);
                let frame = match kite_frame(&(p[n] - p[n - 1]), &v_a) {
                    Ok(f) => f,
                    Err(KiteError::DegenerateFlow) => {
                        self.degenerate_frame_used = true;
                        self.frame_hold.ok_or(ModelError::Kite(KiteError::DegenerateFlow))?
                    }
                    Err(e) => return Err(e.into()),
                };
                let sp = sphere_point(&p[n], &wind_dir);
                let flow =
                    FlowState { v_a, frame, rho, psi: heading_angle(&p[n], &frame.e_x, &wind_dir), beta: sp.elevation };
                let inputs = KiteInputs { i_s: self.inputs.i_s, u_s: self.inputs.u_s, u_d: self.inputs.u_d };
                let kf = forces_1p(&flow, &inputs, &spec.kite, &spec.aero)?;
                forces[n] += kf.total();
                masses[n] += spec.kite.mass + spec.kite.kcu_mass;
            }
            KiteModel::FourPoint => {
                let km =
                    distribute_mass(spec.kite.mass, spec.kite.kcu_mass, spec.geometry.gamma, l_t, spec.tether.sigma, n);
                let wing_pos = [p[n + 1 + A], p[n + 1 + B], p[n + 1 + C], p[n + 1 + D]];
                let wing_vel = [v[n + 1 + A], v[n + 1 + B], v[n + 1 + C], v[n + 1 + D]];
                let frame = frame_4p(&wing_pos)?;
                let body = KiteBody { pos: wing_pos, vel: wing_vel };
                let winds = [air.wind_at(wing_pos[B].z), air.wind_at(wing_pos[C].z), air.wind_at(wing_pos[D].z)];
                let rho = [air.density_at(wing_pos[B].z), air.density_at(wing_pos[C].z), air.density_at(wing_pos[D].z)];
                let flows =
                    surface_flows(&body, &frame, &winds, self.inputs.u_s, self.inputs.u_d, &spec.geometry, &spec.kite);
                let aero = aero_forces_4p(&flows, &frame, &rho, &spec.aero, &spec.geometry, &spec.kite);
                let local_p = [p[n], wing_pos[A], wing_pos[B], wing_pos[C], wing_pos[D]];
                let local_v = [v[n], wing_vel[A], wing_vel[B], wing_vel[C], wing_vel[D]];
                let inner = internal_forces(&self.springs, &local_p, &local_v, spec.tether.compression_factor)?;
                let g = gravity();
                forces[n] += inner[0] + g * spec.kite.kcu_mass;
                masses[n] += spec.kite.kcu_mass;
                for k in 0..4 {
                    let mut f = inner[k + 1] + g * km.wing[k];
                    if k > A {
                        f += aero[k - 1];
                    }
                    forces.push(f);
                    masses.push(km.wing[k]);
                }
            }
        }
        Ok((forces, masses, ground))
    }

    /// Time derivative of the state.
    pub fn derivative(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let dim = self.dim();
        if y.len() != dim || dy.len() != dim {
            return Err(ModelError::Dimension { expected: dim, got: y.len() });
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        let np = self.n_particles();
        let (p, v, l_t, v_t) = self.unpack(y);
        let (forces, masses, ground) = self.loads(&p, &v, l_t)?;
        for i in 0..np {
            let (vel, acc) = if i == 0 { (Vec3::zeros(), Vec3::zeros()) } else { (v[i], forces[i] / masses[i]) };
            for j in 0..3 {
                dy[3 * i + j] = vel[j];
                dy[3 * (np + i) + j] = acc[j];
            }
        }
        if self.inputs.brake {
            dy[6 * np] = 0.0;
            dy[6 * np + 1] = 0.0;
        } else {
            dy[6 * np] = v_t;
            dy[6 * np + 1] = acceleration(&self.spec.winch, self.inputs.v_s, v_t, ground);
        }
        Ok(())
    }

    /// Residual `F(t, Y, Ẏ)`: model derivative minus the supplied derivative.
    pub fn residual(&mut self, y: &[f64], ydot: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut model = vec![0.0; y.len()];
        self.derivative(y, &mut model)?;
        Ok(model.iter().zip(ydot).map(|(m, d)| m - d).collect())
    }

    pub fn observe(&self, y: &[f64]) -> Result<Observation, ModelError> {
        let n = self.n_segments();
        let (p, v, l_t, v_t_o) = self.unpack(y);
        let air = self.air();
        let wind_dir = self.wind.profile.direction();
        let tl = particle_forces(&p[..=n], &v[..=n], l_t, &air, &self.spec.tether)?;
        let v_a = air.wind_at(p[n].z) - v[n];
        let heading = match self.spec.kite_model {
            KiteModel::OnePoint => match kite_frame(&(p[n] - p[n - 1]), &v_a) {
                Ok(f) => f.e_x,
                Err(_) => self.frame_hold.map(|f| f.e_x).unwrap_or_else(Vec3::x),
            },
            KiteModel::FourPoint => frame_4p(&[p[n + 1], p[n + 2], p[n + 3], p[n + 4]])?.e_x,
        };
        let sp = sphere_point(&p[n], &wind_dir);
        Ok(Observation {
            kite_position: p[n],
            kite_velocity: v[n],
            heading,
            apparent_wind: v_a,
            ground_force: tl.ground_force.norm(),
            l_t,
            v_t_o,
            elevation: sp.elevation,
            azimuth: sp.azimuth,
            psi: heading_angle(&p[n], &heading, &wind_dir),
            particles: p,
        })
    }

    /// Kinetic plus gravitational energy of all particles (tether particles
    /// with their lumped masses).
    pub fn mechanical_energy(&mut self, y: &[f64]) -> Result<f64, ModelError> {
        let (p, v, l_t, _) = self.unpack(y);
        let (_, masses, _) = self.loads(&p, &v, l_t)?;
        Ok(p.iter().zip(&v).zip(&masses).map(|((p, v), m)| 0.5 * m * v.norm_squared() + m * crate::G_EARTH * p.z).sum())
    }
}

impl OdeSystem for Plant {
    type Error = ModelError;

    fn dim(&self) -> usize {
        Plant::dim(self)
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        self.derivative(y, dy)
    }
}

impl<A: AirSource> OdeSystem for AnchoredTether<A> {
    type Error = TetherError;

    fn dim(&self) -> usize {
        AnchoredTether::dim(self)
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), TetherError> {
        self.derivative(t, y, dy)
    }
}

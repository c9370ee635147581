//! Automatic operation: a three-point flight-path planner, heading control by
//! great-circle navigation, delayed rate-limited actuators in the kite control
//! unit, and the winch speed/force controller.
//!
//! Angles on the "small earth" (the unit sphere of tether directions) use the
//! azimuth `φ`, positive to the right of the wind direction as seen from the
//! ground station, and the elevation `β`. Headings and bearings are measured
//! in the tangent plane at the kite: zero points towards zenith and positive
//! angles turn towards increasing azimuth (clockwise as seen from the ground
//! station). With this convention positive steering gives a positive turn rate.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("bearing undefined: kite and target are coincident or antipodal")]
    UndefinedBearing,
    #[error("invalid controller settings: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightPhase {
    Parking,
    ReelOutRight,
    ReelOutLeft,
    ReelIn,
}

impl FlightPhase {
    pub fn is_reel_out(self) -> bool {
        matches!(self, FlightPhase::ReelOutRight | FlightPhase::ReelOutLeft)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlightPhase::Parking => "parking",
            FlightPhase::ReelOutRight => "reel_out_right",
            FlightPhase::ReelOutLeft => "reel_out_left",
            FlightPhase::ReelIn => "reel_in",
        }
    }
}

/// Point on the unit sphere, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub azimuth: f64,
    pub elevation: f64,
}

impl SpherePoint {
    pub const ZENITH: SpherePoint = SpherePoint { azimuth: 0.0, elevation: FRAC_PI_2 };

    fn unit(&self, wind_dir: &Vec3) -> Vec3 {
        let left = Vec3::z().cross(wind_dir);
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        wind_dir * (ce * ca) - left * (ce * sa) + Vec3::z() * se
    }
}

/// Horizontal unit vector of the wind direction; used as the azimuth origin.
pub fn wind_axis(direction_deg: f64) -> Vec3 {
    let a = direction_deg.to_radians();
    Vec3::new(a.cos(), a.sin(), 0.0)
}

pub fn sphere_point(p: &Vec3, wind_dir: &Vec3) -> SpherePoint {
    let left = Vec3::z().cross(wind_dir);
    let down_wind = p.dot(wind_dir);
    let right = -p.dot(&left);
    let horizontal = (down_wind * down_wind + right * right).sqrt();
    SpherePoint { azimuth: right.atan2(down_wind), elevation: p.z.atan2(horizontal) }
}

/// Unit vectors towards zenith and towards increasing azimuth in the tangent
/// plane at `p`. At zenith "up" falls back to the upwind direction.
pub fn tangent_basis(p: &Vec3, wind_dir: &Vec3) -> (Vec3, Vec3) {
    let r = p.normalize();
    let up = Vec3::z() - r * r.z;
    let e_up = if up.norm() > 1e-12 { up.normalize() } else { -wind_dir };
    (e_up, r.cross(&e_up))
}

/// Heading of the wing direction `e_x` at position `p`.
pub fn heading_angle(p: &Vec3, e_x: &Vec3, wind_dir: &Vec3) -> f64 {
    let (up, right) = tangent_basis(p, wind_dir);
    e_x.dot(&right).atan2(e_x.dot(&up))
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Initial bearing of the great circle from `kite` towards `target`.
pub fn great_circle_heading(kite: &SpherePoint, target: &SpherePoint) -> Result<f64, ControlError> {
    let wind = Vec3::x();
    let k = kite.unit(&wind);
    let t = target.unit(&wind);
    let d = t - k * t.dot(&k);
    if d.norm() < 1e-9 {
        return Err(ControlError::UndefinedBearing);
    }
    let (up, right) = tangent_basis(&k, &wind);
    Ok(d.dot(&right).atan2(d.dot(&up)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    /// Tether length at which reel-in ends, m.
    pub l_min: f64,
    /// Tether length at which reel-out ends, m.
    pub l_max: f64,
    /// Azimuth of the reel-out attractors, degrees (± for right/left).
    pub target_azimuth_deg: f64,
    /// Elevation of the reel-out attractors, degrees.
    pub target_elevation_deg: f64,
    /// Azimuth beyond which the kite turns towards the other attractor,
    /// degrees. Kept inside the attractor azimuth so the bearing stays defined.
    pub turn_trigger_deg: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            l_min: 392.0,
            l_max: 700.0,
            target_azimuth_deg: 25.0,
            target_elevation_deg: 25.0,
            turn_trigger_deg: 20.0,
        }
    }
}

/// Phase machine and attractor points.
#[derive(Debug, Clone)]
pub struct PathPlanner {
    pub params: PlannerParams,
    pub phase: FlightPhase,
}

impl PathPlanner {
    pub fn new(params: PlannerParams, phase: FlightPhase) -> Self {
        Self { params, phase }
    }

    pub fn target(&self) -> SpherePoint {
        let az = self.params.target_azimuth_deg.to_radians();
        let el = self.params.target_elevation_deg.to_radians();
        match self.phase {
            FlightPhase::Parking | FlightPhase::ReelIn => SpherePoint::ZENITH,
            FlightPhase::ReelOutRight => SpherePoint { azimuth: az, elevation: el },
            FlightPhase::ReelOutLeft => SpherePoint { azimuth: -az, elevation: el },
        }
    }

    /// Applies the phase transitions for the current kite position and
    /// tether length and returns the target.
    pub fn update(&mut self, kite: &SpherePoint, l_t: f64) -> SpherePoint {
        let az = self.params.turn_trigger_deg.to_radians();
        self.phase = match self.phase {
            FlightPhase::Parking => FlightPhase::Parking,
            p if p.is_reel_out() && l_t >= self.params.l_max => FlightPhase::ReelIn,
            FlightPhase::ReelOutRight if kite.azimuth >= az => FlightPhase::ReelOutLeft,
            FlightPhase::ReelOutLeft if kite.azimuth <= -az => FlightPhase::ReelOutRight,
            FlightPhase::ReelIn if l_t <= self.params.l_min => FlightPhase::ReelOutRight,
            p => p,
        };
        self.target()
    }
}

pub fn plan_target(planner: &mut PathPlanner, kite: &SpherePoint, l_t: f64) -> SpherePoint {
    planner.update(kite, l_t)
}

/// PI heading controller with output clamped to [−1, 1] and a clamping
/// anti-windup: the integrator is frozen while the output saturates in the
/// direction of the error.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadingController {
    pub kp: f64,
    pub ki: f64,
    pub integral: f64,
}

impl HeadingController {
    pub fn new(kp: f64, ki: f64) -> Self {
        Self { kp, ki, integral: 0.0 }
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let e = wrap_angle(error);
        let candidate = self.integral + self.ki * e * dt;
        let out = self.kp * e + candidate;
        if out.abs() > 1.0 && out.signum() == e.signum() {
            (self.kp * e + self.integral).clamp(-1.0, 1.0)
        } else {
            self.integral = candidate;
            out.clamp(-1.0, 1.0)
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }
}

pub fn heading_controller(ctrl: &mut HeadingController, bearing_error: f64, dt: f64) -> f64 {
    ctrl.update(bearing_error, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorParams {
    /// Transport delay, s.
    pub delay: f64,
    /// Gain of the proportional tracking loop, 1/s.
    pub gain: f64,
    /// Maximum rate of the actuated steering, full scale per second.
    pub steering_rate: f64,
    /// Maximum rate of the actuated depower, full scale per second.
    pub depower_rate: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self { delay: 0.15, gain: 20.0, steering_rate: 1.0, depower_rate: 0.2 }
    }
}

/// Steering and depower actuators of the kite control unit.
#[derive(Debug, Clone)]
pub struct Actuators {
    pub params: ActuatorParams,
    queue: VecDeque<(f64, f64)>,
    pub u_s: f64,
    pub u_d: f64,
}

impl Actuators {
    /// Actuators resting at `(u_s, u_d)` with the delay line filled with the
    /// same values.
    pub fn new(params: ActuatorParams, u_s: f64, u_d: f64, dt: f64) -> Self {
        let n = (params.delay / dt).round() as usize;
        Self { params, queue: std::iter::repeat_n((u_s, u_d), n).collect(), u_s, u_d }
    }

    /// Feeds the commands of this interval and returns the actuated values.
    pub fn update(&mut self, i_s: f64, i_d: f64, dt: f64) -> (f64, f64) {
        self.queue.push_back((i_s, i_d));
        let (s, d) = self.queue.pop_front().unwrap_or((i_s, i_d));
        let track = |u: f64, target: f64, rate: f64| {
            let step = (self.params.gain * (target - u) * dt).clamp(-rate * dt, rate * dt);
            // the proportional step never overshoots the target
            if (target - u).abs() <= step.abs() {
                target
            } else {
                u + step
            }
        };
        self.u_s = track(self.u_s, s, self.params.steering_rate).clamp(-1.0, 1.0);
        self.u_d = track(self.u_d, d, self.params.depower_rate).clamp(0.0, 1.0);
        (self.u_s, self.u_d)
    }
}

pub fn actuator_dynamics(act: &mut Actuators, i_s: f64, i_d: f64, dt: f64) -> (f64, f64) {
    act.update(i_s, i_d, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WinchSetpoints {
    /// Reel-out speed set value, m/s.
    pub v_out_set: f64,
    /// Maximum tether force during reel-out, N.
    pub f_max_out: f64,
    /// Reel-in speed set value (negative), m/s.
    pub v_in_set: f64,
    /// Minimum tether force during reel-in, N.
    pub f_in_set: f64,
    /// Time constant of the set-value transitions, s.
    pub transition_time: f64,
    /// Force-loop gains during reel-out, m/s per N (and per N·s, N/s).
    pub kp_out: f64,
    pub ki_out: f64,
    pub kd_out: f64,
    /// Force-loop gains during reel-in.
    pub kp_in: f64,
    pub ki_in: f64,
    pub kd_in: f64,
    /// Limit of the synchronous speed command, m/s.
    pub v_max: f64,
}

impl Default for WinchSetpoints {
    fn default() -> Self {
        Self {
            v_out_set: 1.9,
            f_max_out: 3200.0,
            v_in_set: -7.7,
            f_in_set: 500.0,
            transition_time: 1.0,
            kp_out: 2e-3,
            ki_out: 5e-4,
            kd_out: 0.0,
            kp_in: 2e-3,
            ki_in: 5e-4,
            kd_in: 0.0,
            v_max: 12.0,
        }
    }
}

impl WinchSetpoints {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.f_max_out > 0.0 && self.f_in_set > 0.0 && self.transition_time > 0.0 && self.v_max > 0.0) {
            return Err(ControlError::InvalidParams("force limits, transition time and v_max must be positive".into()));
        }
        Ok(())
    }
}

/// Speed tracking with a force limit (reel-out) or force floor (reel-in).
/// The force loop can only raise the synchronous speed, which lowers the
/// force during reel-out and raises it during reel-in.
#[derive(Debug, Clone)]
pub struct WinchController {
    pub setpoints: WinchSetpoints,
    filtered: f64,
    integral: f64,
    last_error: Option<f64>,
    last_mode: Option<bool>,
}

impl WinchController {
    pub fn new(setpoints: WinchSetpoints, v_initial: f64) -> Self {
        Self { setpoints, filtered: v_initial, integral: 0.0, last_error: None, last_mode: None }
    }

    /// Synchronous speed command for the measured ground force `force`.
    pub fn update(&mut self, force: f64, phase: FlightPhase, dt: f64) -> f64 {
        let sp = &self.setpoints;
        let (target, error, kp, ki, kd) = match phase {
            FlightPhase::Parking => (0.0, 0.0, 0.0, 0.0, 0.0),
            FlightPhase::ReelIn => (sp.v_in_set, sp.f_in_set - force, sp.kp_in, sp.ki_in, sp.kd_in),
            _ => (sp.v_out_set, force - sp.f_max_out, sp.kp_out, sp.ki_out, sp.kd_out),
        };
        let reel_in = phase == FlightPhase::ReelIn;
        if self.last_mode.is_some_and(|m| m != reel_in) {
            // bumpless switch: the force-loop contribution moves into the filter state
            self.filtered += self.correction(self.last_error.unwrap_or(0.0), kp, 0.0);
            self.integral = 0.0;
            self.last_error = None;
        }
        self.last_mode = Some(reel_in);
        self.filtered += (target - self.filtered) * (dt / sp.transition_time).min(1.0);

        let derivative = self.last_error.map_or(0.0, |e| (error - e) / dt);
        self.integral = (self.integral + ki * error * dt).clamp(0.0, sp.v_max);
        self.last_error = Some(error);
        let out = self.filtered + self.correction(error, kp, kd * derivative);
        out.clamp(-sp.v_max, sp.v_max)
    }

    fn correction(&self, error: f64, kp: f64, d_term: f64) -> f64 {
        (kp * error + self.integral + d_term).max(0.0)
    }
}

pub fn winch_controller(ctrl: &mut WinchController, force: f64, phase: FlightPhase, dt: f64) -> f64 {
    ctrl.update(force, phase, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub heading_kp: f64,
    pub heading_ki: f64,
    /// Depower commands per phase.
    pub depower_out: f64,
    pub depower_in: f64,
    pub depower_park: f64,
    pub actuators: ActuatorParams,
    pub winch: WinchSetpoints,
    pub planner: PlannerParams,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            heading_kp: 0.6,
            heading_ki: 0.2,
            depower_out: 0.26,
            depower_in: 0.401,
            depower_park: 0.26,
            actuators: ActuatorParams::default(),
            winch: WinchSetpoints::default(),
            planner: PlannerParams::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidParams(m.into()));
        if !(self.planner.l_min < self.planner.l_max) {
            return bad("l_min must be smaller than l_max");
        }
        let pl = &self.planner;
        if !(0.0 < pl.turn_trigger_deg && pl.turn_trigger_deg < pl.target_azimuth_deg) {
            return bad("turn_trigger_deg must lie between 0 and target_azimuth_deg");
        }
        for d in [self.depower_out, self.depower_in, self.depower_park] {
            if !(0.0..=1.0).contains(&d) {
                return bad("depower commands must be in [0, 1]");
            }
        }
        let a = &self.actuators;
        if !(a.delay >= 0.0 && a.gain > 0.0 && a.steering_rate > 0.0 && a.depower_rate > 0.0) {
            return bad("actuator gain and rates must be positive, delay non-negative");
        }
        if !(self.heading_kp >= 0.0 && self.heading_ki >= 0.0) {
            return bad("heading gains must be non-negative");
        }
        self.winch.validate()
    }

    fn depower_for(&self, phase: FlightPhase) -> f64 {
        match phase {
            FlightPhase::Parking => self.depower_park,
            FlightPhase::ReelIn => self.depower_in,
            _ => self.depower_out,
        }
    }
}

/// Commanded and actuated control values held during one interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSignals {
    pub i_s: f64,
    pub i_d: f64,
    pub u_s: f64,
    pub u_d: f64,
    pub v_s_set: f64,
}

/// Per-channel manual overrides; `None` leaves the channel automatic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ManualOverrides {
    pub steering: Option<f64>,
    pub depower: Option<f64>,
    pub winch_set: Option<f64>,
}

/// What the controllers see of the plant at an interval boundary.
#[derive(Debug, Clone, Copy)]
pub struct Measurements {
    pub kite_position: Vec3,
    pub heading: Vec3,
    pub ground_force: f64,
    pub l_t: f64,
}

/// The complete automatic control stack.
#[derive(Debug, Clone)]
pub struct FlightController {
    pub config: ControllerConfig,
    pub planner: PathPlanner,
    pub heading: HeadingController,
    pub actuators: Actuators,
    pub winch: WinchController,
    pub overrides: ManualOverrides,
    pub wind_dir: Vec3,
    last_bearing: f64,
    auto_steering: f64,
    pub signals: ControlSignals,
}

impl FlightController {
    pub fn new(config: ControllerConfig, phase: FlightPhase, wind_dir: Vec3, dt: f64) -> Self {
        let u_d = config.depower_for(phase);
        let signals = ControlSignals { i_s: 0.0, i_d: u_d, u_s: 0.0, u_d, v_s_set: 0.0 };
        Self {
            planner: PathPlanner::new(config.planner.clone(), phase),
            heading: HeadingController::new(config.heading_kp, config.heading_ki),
            actuators: Actuators::new(config.actuators.clone(), 0.0, u_d, dt),
            winch: WinchController::new(config.winch.clone(), 0.0),
            config,
            overrides: ManualOverrides::default(),
            wind_dir,
            last_bearing: 0.0,
            auto_steering: 0.0,
            signals,
        }
    }

    pub fn phase(&self) -> FlightPhase {
        self.planner.phase
    }

    /// Runs all controllers once and returns the signals for the next interval.
    pub fn update(&mut self, m: &Measurements, dt: f64) -> ControlSignals {
        let kite = sphere_point(&m.kite_position, &self.wind_dir);
        let target = self.planner.update(&kite, m.l_t);
        let phase = self.planner.phase;
        let bearing = great_circle_heading(&kite, &target).unwrap_or(self.last_bearing);
        self.last_bearing = bearing;
        let psi = heading_angle(&m.kite_position, &m.heading, &self.wind_dir);
        // the automatic command never moves faster than the steering actuator
        let step = self.config.actuators.steering_rate * dt;
        let pi = self.heading.update(bearing - psi, dt);
        let auto_s = self.auto_steering + (pi - self.auto_steering).clamp(-step, step);
        self.auto_steering = auto_s;
        let i_s = self.overrides.steering.unwrap_or(auto_s).clamp(-1.0, 1.0);
        let i_d = self.overrides.depower.unwrap_or(self.config.depower_for(phase)).clamp(0.0, 1.0);
        let (u_s, u_d) = self.actuators.update(i_s, i_d, dt);
        let auto_v = self.winch.update(m.ground_force, phase, dt);
        let v_s_set = self.overrides.winch_set.unwrap_or(auto_v);
        self.signals = ControlSignals { i_s, i_d, u_s, u_d, v_s_set };
        self.signals
    }
}

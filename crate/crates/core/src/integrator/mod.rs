//! Time integration in fixed control intervals.
//!
//! Between interval boundaries the plant inputs are constant and the Radau
//! solver takes as many sub-steps as its error control requires. At each
//! boundary the controllers run once and one log record is produced.

pub mod model;
pub mod radau;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::atmosphere::WindField;
use crate::config::{SimConfig, SolverConfig};
use crate::controller::{FlightController, FlightPhase, Measurements};
use crate::log::{CycleLog, LogRecord};
use crate::telemetry::{Command, Outbound, TelemetryFrame};
use crate::winch::mechanical_power;
use model::{ModelError, Observation, Plant, PlantInputs, PlantSpec};
use radau::{Radau5, RadauError, RadauSettings};

/// Time the point-mass kite may fly on a held frame before an instability
/// event is raised, s.
pub const DEGENERATE_FRAME_LIMIT: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("model error at t = {t:.3} s: {source}")]
    Model { t: f64, source: ModelError },
    #[error("solver failure in the interval starting at t = {t:.3} s: {source}")]
    Solver { t: f64, source: RadauError },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    PhaseChange(FlightPhase),
    Instability,
    DegradedRealtime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub kind: EventKind,
    pub message: String,
}

fn tolerances(plant: &Plant, solver: &SolverConfig) -> Vec<f64> {
    let np = plant.n_particles();
    let mut atol = vec![solver.abstol_position; 3 * np];
    atol.extend(std::iter::repeat_n(solver.abstol_velocity, 3 * np));
    atol.push(solver.abstol_position);
    atol.push(solver.abstol_velocity);
    atol
}

pub struct Simulation {
    pub config: SimConfig,
    pub plant: Plant,
    pub controller: FlightController,
    pub y: Vec<f64>,
    pub events: Vec<SimEvent>,
    solver: Radau5,
    /// Completed control intervals since logging started.
    intervals: u64,
    dt: f64,
    degenerate_time: f64,
}

impl Simulation {
    /// Builds the plant from the configuration, places it in its initial
    /// state and lets it settle with frozen controllers and a locked drum.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let spec = PlantSpec {
            kite_model: config.model.kite,
            tether: config.effective_tether(),
            kite: config.kite.clone(),
            geometry: config.kite_geometry.clone(),
            aero: config.aero.clone(),
            winch: config.winch.clone(),
        };
        let wind = WindField::new(config.atmosphere.wind.clone(), config.scenario.seed);
        let mut plant = Plant::new(spec, wind, config.atmosphere.density.clone());
        let sc = &config.scenario;
        let y = plant
            .initial_state(sc.l_t, sc.elevation_deg.to_radians(), sc.azimuth_deg.to_radians())
            .map_err(|source| SimError::Model { t: -sc.settle_time, source })?;
        let mut settings = RadauSettings::new(config.solver.reltol, tolerances(&plant, &config.solver));
        settings.max_steps = config.solver.max_substeps;
        let solver = Radau5::new(plant.dim(), settings).map_err(|e| SimError::Config(e.to_string()))?;
        let dt = config.solver.interval;
        let wind_dir = plant.wind.profile.direction();
        let controller = FlightController::new(config.controller.clone(), sc.phase, wind_dir, dt);
        let mut sim =
            Self { config, plant, controller, y, events: Vec::new(), solver, intervals: 0, dt, degenerate_time: 0.0 };
        sim.settle()?;
        Ok(sim)
    }

    fn settle(&mut self) -> Result<(), SimError> {
        let n = (self.config.scenario.settle_time / self.dt).round() as u64;
        let s = self.controller.signals;
        self.plant.inputs = PlantInputs { i_s: 0.0, u_s: 0.0, u_d: s.u_d, v_s: 0.0, brake: true };
        for k in 0..n {
            let t0 = -((n - k) as f64) * self.dt;
            self.integrate(t0, t0 + self.dt)?;
        }
        Ok(())
    }

    fn integrate(&mut self, t0: f64, t1: f64) -> Result<(), SimError> {
        self.plant.degenerate_frame_used = false;
        self.solver
            .integrate(&mut self.plant, t0, t1, &mut self.y)
            .map_err(|source| SimError::Solver { t: t0, source })?;
        self.plant.latch_frame(&self.y);
        if self.plant.degenerate_frame_used {
            self.degenerate_time += t1 - t0;
            if self.degenerate_time >= DEGENERATE_FRAME_LIMIT
                && self.degenerate_time - (t1 - t0) < DEGENERATE_FRAME_LIMIT
            {
                self.events.push(SimEvent {
                    t: t1,
                    kind: EventKind::Instability,
                    message: "apparent wind parallel to the tether; kite frame undefined".into(),
                });
            }
        } else {
            self.degenerate_time = 0.0;
        }
        Ok(())
    }

    /// Time of the last completed interval boundary, s.
    pub fn time(&self) -> f64 {
        self.intervals as f64 * self.dt
    }

    pub fn interval(&self) -> f64 {
        self.dt
    }

    pub fn observe(&self) -> Result<Observation, SimError> {
        self.plant.observe(&self.y).map_err(|source| SimError::Model { t: self.time(), source })
    }

    /// Runs the controllers once, then advances the plant by one interval.
    pub fn step_interval(&mut self) -> Result<LogRecord, SimError> {
        let t0 = self.time();
        let obs = self.observe()?;
        let phase_before = self.controller.phase();
        let m = Measurements {
            kite_position: obs.kite_position,
            heading: obs.heading,
            ground_force: obs.ground_force,
            l_t: obs.l_t,
        };
        let s = self.controller.update(&m, self.dt);
        let phase = self.controller.phase();
        if phase != phase_before {
            self.events.push(SimEvent { t: t0, kind: EventKind::PhaseChange(phase), message: phase.as_str().into() });
        }
        let brake = phase == FlightPhase::Parking && self.controller.overrides.winch_set.is_none();
        self.plant.wind.advance(t0);
        self.plant.inputs = PlantInputs { i_s: s.i_s, u_s: s.u_s, u_d: s.u_d, v_s: s.v_s_set, brake };
        let t1 = (self.intervals + 1) as f64 * self.dt;
        self.integrate(t0, t1)?;
        self.intervals += 1;
        let obs = self.observe()?;
        Ok(LogRecord {
            t: t1,
            position: [obs.kite_position.x, obs.kite_position.y, obs.kite_position.z],
            elevation: obs.elevation.to_degrees(),
            azimuth: obs.azimuth.to_degrees(),
            heading: obs.psi,
            v_a: obs.apparent_wind.norm(),
            force: obs.ground_force,
            l_t: obs.l_t,
            v_t_o: obs.v_t_o,
            u_s: s.u_s,
            u_d: s.u_d,
            v_s_set: s.v_s_set,
            phase,
            power: mechanical_power(obs.ground_force, obs.v_t_o),
        })
    }

    pub fn run_batch(&mut self, duration: f64) -> Result<CycleLog, SimError> {
        let n = (duration / self.dt).round() as usize;
        let mut log = Vec::with_capacity(n);
        for _ in 0..n {
            log.push(self.step_interval()?);
        }
        Ok(log)
    }

    pub fn solver_stats(&self) -> radau::RadauStats {
        self.solver.stats
    }
}

/// Outcome of a real-time session.
#[derive(Debug, Clone, PartialEq)]
pub struct RealtimeReport {
    pub log: CycleLog,
    pub published: u64,
    pub missed: u64,
    pub degraded_warnings: u64,
    pub rejected_commands: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct RealtimeOptions {
    /// Stop after this many seconds of simulated time.
    pub duration: Option<f64>,
    /// Sleep until each deadline; false runs as fast as possible with the
    /// same interval logic.
    pub paced: bool,
}

/// Runs the simulation against the wall clock. Commands arriving on
/// `commands` (JSON text) are applied at the next interval boundary; every
/// outbound message goes to `sink`.
pub fn run_realtime(
    sim: &mut Simulation,
    options: RealtimeOptions,
    commands: &Receiver<String>,
    sink: &mut dyn FnMut(Outbound) -> u64,
    stop: &AtomicBool,
) -> Result<RealtimeReport, SimError> {
    let dt = sim.interval();
    let period = Duration::from_secs_f64(dt);
    let window = (5.0 / dt).round() as usize;
    let mut recent: VecDeque<bool> = VecDeque::with_capacity(window);
    let mut report =
        RealtimeReport { log: Vec::new(), published: 0, missed: 0, degraded_warnings: 0, rejected_commands: 0 };
    let mut dropped = 0;
    let start = Instant::now();
    let limit = options.duration.map(|d| (d / dt).round() as u64);
    let mut k: u64 = 0;
    let mut degraded = false;
    while !stop.load(Ordering::Relaxed) && limit.is_none_or(|l| k < l) {
        while let Ok(text) = commands.try_recv() {
            match Command::parse(&text) {
                Ok(cmd) => sim.controller.overrides = cmd.apply(&sim.controller.overrides),
                Err(e) => {
                    report.rejected_commands += 1;
                    sink(Outbound::error(e.to_string()));
                }
            }
        }
        let events_before = sim.events.len();
        let record = sim.step_interval()?;
        k += 1;
        let deadline = start + period * k as u32;
        let now = Instant::now();
        let miss = now > deadline;
        if miss {
            report.missed += 1;
        }
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(miss);
        let misses = recent.iter().filter(|m| **m).count();
        if recent.len() == window && misses * 10 > window {
            if !degraded {
                degraded = true;
                report.degraded_warnings += 1;
                let message = format!("degraded real time: {misses} deadline misses in the last 5 s");
                sim.events.push(SimEvent { t: record.t, kind: EventKind::DegradedRealtime, message: message.clone() });
            }
        } else {
            degraded = false;
        }
        for e in &sim.events[events_before..] {
            sink(Outbound::Event { t: e.t, message: e.message.clone() });
        }
        let obs = sim.observe()?;
        let frame = TelemetryFrame {
            seq: k,
            record: record.clone(),
            particles: obs.particles.iter().map(|p| [p.x, p.y, p.z]).collect(),
            dropped,
            missed: report.missed,
        };
        dropped = sink(Outbound::Telemetry(frame));
        report.published += 1;
        report.log.push(record);
        if options.paced && !miss {
            std::thread::sleep(deadline - now);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atmosphere::UniformAir;
    use crate::integrator::model::KiteModel;
    use crate::tether::{hanging_equilibrium, AnchoredTether, ReelState, TetherParams};
    use crate::Vec3;

    fn short_config(kite: KiteModel) -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.model.kite = kite;
        cfg.scenario.phase = FlightPhase::Parking;
        cfg.scenario.settle_time = 1.0;
        cfg
    }

    #[test]
    fn four_point_kite_adds_24_states() {
        let a = Simulation::new(short_config(KiteModel::OnePoint)).unwrap();
        let b = Simulation::new(short_config(KiteModel::FourPoint)).unwrap();
        assert_eq!(b.y.len() - a.y.len(), 24);
        assert_eq!(a.y.len(), 6 * 8 + 2);
        let mut p = b.plant.clone();
        let r = p.residual(&b.y, &vec![0.0; b.y.len()]).unwrap();
        assert_eq!(r.len(), b.y.len());
    }

    #[test]
    fn batch_emits_one_record_per_interval() {
        let mut sim = Simulation::new(short_config(KiteModel::OnePoint)).unwrap();
        let log = sim.run_batch(2.0).unwrap();
        assert_eq!(log.len(), 40);
        for (k, r) in log.iter().enumerate() {
            assert!((r.t - 0.05 * (k + 1) as f64).abs() < 1e-12);
            assert!(r.force.is_finite() && r.force > 0.0);
        }
        assert!(sim.y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn hanging_tether_stays_at_rest() {
        let params = TetherParams::default();
        let pos = hanging_equilibrium(&params, 392.0);
        let mut y = AnchoredTether::<UniformAir>::pack(&pos, &vec![Vec3::zeros(); pos.len()]);
        let y_start = y.clone();
        let mut tether = AnchoredTether {
            params,
            reel: ReelState { l_t_i: 392.0, v_t_o: 0.0, t_i: 0.0 },
            air: UniformAir { wind: Vec3::zeros(), rho: 1.225 },
        };
        let mut solver = Radau5::new(y.len(), RadauSettings::new(1e-3, vec![1e-4; y.len()])).unwrap();
        for k in 0..20 {
            solver.integrate(&mut tether, k as f64 * 0.05, (k + 1) as f64 * 0.05, &mut y).unwrap();
        }
        let drift = y.iter().zip(&y_start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-4, "{drift}");
    }
}

//! Dynamic model of a pumping kite power system.
//!
//! The plant is a particle system: a tether discretized into spring-damper
//! segments, a kite represented either by a single point mass or by four
//! particles with rotational inertia, and a winch driven by an asynchronous
//! generator. The coupled equations are integrated with an implicit Radau IIA
//! solver in fixed 50 ms control intervals, between which the flight-path and
//! winch controllers run.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod calibration;
pub mod config;
pub mod controller;
pub mod integrator;
pub mod kite_four_point;
pub mod kite_one_point;
pub mod log;
pub mod telemetry;
pub mod tether;
pub mod winch;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Gravitational acceleration, m/s².
pub const G_EARTH: f64 = 9.81;

/// Gravity vector of the ground frame (z up).
pub fn gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -G_EARTH)
}

//! Scenario runner and telemetry server of the kite power system simulator.

pub mod run;
pub mod server;

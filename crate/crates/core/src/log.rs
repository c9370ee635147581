//! Per-interval log records and their CSV form.
//!
//! Columns, in order:
//!
//! | column | unit |
//! |---|---|
//! | `t` | s |
//! | `x`, `y`, `z` | m (kite position, KCU for the four-point kite) |
//! | `elevation`, `azimuth` | deg |
//! | `heading` | rad |
//! | `v_a` | m/s |
//! | `force` | N (tether force at the ground station) |
//! | `l_t` | m |
//! | `v_t_o` | m/s |
//! | `u_s`, `u_d` | - |
//! | `v_s_set` | m/s |
//! | `phase` | name |
//! | `power` | W (mechanical, positive while generating) |
//!
//! Time is written with three decimals, all other numbers with six
//! significant digits.

use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::controller::FlightPhase;

pub const CSV_HEADER: &str = "t,x,y,z,elevation,azimuth,heading,v_a,force,l_t,v_t_o,u_s,u_d,v_s_set,phase,power";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub position: [f64; 3],
    pub elevation: f64,
    pub azimuth: f64,
    pub heading: f64,
    pub v_a: f64,
    pub force: f64,
    pub l_t: f64,
    pub v_t_o: f64,
    pub u_s: f64,
    pub u_d: f64,
    pub v_s_set: f64,
    pub phase: FlightPhase,
    pub power: f64,
}

pub type CycleLog = Vec<LogRecord>;

/// Six significant digits without trailing noise.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let s = format!("{v:.5e}");
    let parsed: f64 = s.parse().unwrap_or(v);
    format!("{parsed}")
}

impl LogRecord {
    pub fn csv_row(&self) -> String {
        let nums = [
            self.position[0],
            self.position[1],
            self.position[2],
            self.elevation,
            self.azimuth,
            self.heading,
            self.v_a,
            self.force,
            self.l_t,
            self.v_t_o,
            self.u_s,
            self.u_d,
            self.v_s_set,
        ];
        let mut row = format!("{:.3}", self.t);
        for v in nums {
            row.push(',');
            row.push_str(&sig6(v));
        }
        row.push(',');
        row.push_str(self.phase.as_str());
        row.push(',');
        row.push_str(&sig6(self.power));
        row
    }
}

pub fn write_csv<W: Write>(mut out: W, log: &[LogRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in log {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

fn parse_phase(s: &str) -> Option<FlightPhase> {
    [FlightPhase::Parking, FlightPhase::ReelOutRight, FlightPhase::ReelOutLeft, FlightPhase::ReelIn]
        .into_iter()
        .find(|p| p.as_str() == s)
}

pub fn read_csv<R: BufRead>(input: R) -> Result<CycleLog, LogError> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(LogError::Format { line: 1, message: "unexpected header".into() });
    }
    let mut log = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 2;
        let err = |message: String| LogError::Format { line: lineno, message };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 16 {
            return Err(err(format!("{} columns, expected 16", cols.len())));
        }
        let num = |i: usize| cols[i].trim().parse::<f64>().map_err(|e| err(format!("column {i}: {e}")));
        log.push(LogRecord {
            t: num(0)?,
            position: [num(1)?, num(2)?, num(3)?],
            elevation: num(4)?,
            azimuth: num(5)?,
            heading: num(6)?,
            v_a: num(7)?,
            force: num(8)?,
            l_t: num(9)?,
            v_t_o: num(10)?,
            u_s: num(11)?,
            u_d: num(12)?,
            v_s_set: num(13)?,
            phase: parse_phase(cols[14].trim()).ok_or_else(|| err(format!("unknown phase {}", cols[14])))?,
            power: num(15)?,
        });
    }
    Ok(log)
}

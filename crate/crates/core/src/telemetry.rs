//! Wire schema of the real-time session.
//!
//! Outbound messages are JSON objects tagged by `"type"`: one `telemetry`
//! message per control interval, `error` replies to malformed commands and
//! `event` notices. Inbound commands look like
//! `{"mode": "manual", "steering": -0.3}`; channels that are absent stay
//! under automatic control, and `"mode": "auto"` releases all channels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ManualOverrides;
use crate::log::LogRecord;

/// Largest accepted winch set speed magnitude, m/s.
pub const MAX_WINCH_SET: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Index of the control interval, starting at 1.
    pub seq: u64,
    #[serde(flatten)]
    pub record: LogRecord,
    /// Positions of all particles, m.
    pub particles: Vec<[f64; 3]>,
    /// Frames dropped so far because the client was slow.
    pub dropped: u64,
    /// Deadline misses so far.
    pub missed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Telemetry(TelemetryFrame),
    Error { message: String },
    Event { t: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandMode {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub mode: CommandMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winch_set: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("malformed command: {0}")]
    Malformed(String),
    #[error("{field} = {value} is outside {range}")]
    OutOfRange { field: &'static str, value: f64, range: &'static str },
}

impl Command {
    pub fn parse(text: &str) -> Result<Self, CommandError> {
        let cmd: Command = serde_json::from_str(text).map_err(|e| CommandError::Malformed(e.to_string()))?;
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<(), CommandError> {
        let check = |field, v: Option<f64>, lo: f64, hi: f64, range| match v {
            Some(x) if !(x.is_finite() && lo <= x && x <= hi) => {
                Err(CommandError::OutOfRange { field, value: x, range })
            }
            _ => Ok(()),
        };
        check("steering", self.steering, -1.0, 1.0, "[-1, 1]")?;
        check("depower", self.depower, 0.0, 1.0, "[0, 1]")?;
        check("winch_set", self.winch_set, -MAX_WINCH_SET, MAX_WINCH_SET, "[-20, 20] m/s")
    }

    /// New override set after applying this command to `current`.
    pub fn apply(&self, current: &ManualOverrides) -> ManualOverrides {
        match self.mode {
            CommandMode::Auto => ManualOverrides::default(),
            CommandMode::Manual => ManualOverrides {
                steering: self.steering.or(current.steering),
                depower: self.depower.or(current.depower),
                winch_set: self.winch_set.or(current.winch_set),
            },
        }
    }
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound messages are always serializable")
    }

    pub fn error(message: impl Into<String>) -> Self {
        Outbound::Error { message: message.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::FlightPhase;
    use proptest::prelude::*;

    fn frame(seq: u64, force: f64) -> TelemetryFrame {
        TelemetryFrame {
            seq,
            record: LogRecord {
                t: seq as f64 * 0.05,
                position: [100.0, -2.5, 300.25],
                elevation: 70.0,
                azimuth: -1.0,
                heading: 0.5,
                v_a: 12.0,
                force,
                l_t: 392.0,
                v_t_o: 0.0,
                u_s: 0.1,
                u_d: 0.3,
                v_s_set: 0.0,
                phase: FlightPhase::Parking,
                power: 0.0,
            },
            particles: vec![[0.0, 0.0, 0.0], [100.0, -2.5, 300.25]],
            dropped: 0,
            missed: 1,
        }
    }

    #[test]
    fn telemetry_frame_is_flat_and_tagged() {
        let json = Outbound::Telemetry(frame(3, 650.5)).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["type"], "telemetry");
        assert_eq!(v["force"], 650.5);
        assert_eq!(v["phase"], "parking");
        assert_eq!(v["particles"][1][2], 300.25);
    }

    proptest! {
        #[test]
        fn frames_round_trip(seq in 0u64..1_000_000, force in -1e6..1e6f64) {
            let out = Outbound::Telemetry(frame(seq, force));
            let back: Outbound = serde_json::from_str(&out.to_json()).unwrap();
            prop_assert_eq!(back, out);
        }
    }

    #[test]
    fn command_validation() {
        assert!(Command::parse(r#"{"mode":"manual","steering":-1}"#).is_ok());
        assert!(Command::parse(r#"{"mode":"auto"}"#).is_ok());
        assert!(matches!(
            Command::parse(r#"{"mode":"manual","steering":1.5}"#),
            Err(CommandError::OutOfRange { field: "steering", .. })
        ));
        assert!(matches!(Command::parse(r#"{"mode":"manual","depower":-0.1}"#), Err(CommandError::OutOfRange { .. })));
        assert!(matches!(Command::parse(r#"{"mode":"pilot"}"#), Err(CommandError::Malformed(_))));
        assert!(matches!(Command::parse("not json"), Err(CommandError::Malformed(_))));
        assert!(matches!(Command::parse(r#"{"mode":"manual","yaw":1}"#), Err(CommandError::Malformed(_))));
    }

    #[test]
    fn manual_channels_accumulate_and_auto_releases() {
        let a = Command::parse(r#"{"mode":"manual","steering":0.5}"#).unwrap();
        let b = Command::parse(r#"{"mode":"manual","winch_set":-3}"#).unwrap();
        let o = b.apply(&a.apply(&ManualOverrides::default()));
        assert_eq!(o.steering, Some(0.5));
        assert_eq!(o.winch_set, Some(-3.0));
        assert_eq!(o.depower, None);
        let auto = Command::parse(r#"{"mode":"auto"}"#).unwrap();
        assert_eq!(auto.apply(&o), ManualOverrides::default());
    }
}

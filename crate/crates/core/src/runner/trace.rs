//! JSON-lines trace: one `{"t", "kind", "data"}` object per line.

use super::config::ScenarioConfig;
use crate::control::WanderMode;
use crate::coordination::MissionMode;
use crate::geometry::Point2;
use crate::perception::{Track, TrackStatus};
use crate::sim::Pose2;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use thiserror::Error;

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub robot_id: u8,
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub robot_id: u8,
    pub status: TrackStatus,
    pub pose: Pose2,
    pub v: f64,
    pub omega: f64,
}

impl From<&Track> for TrackRecord {
    fn from(tr: &Track) -> Self {
        let vel = tr.vel_est();
        Self { robot_id: tr.robot_id, status: tr.status, pose: tr.pose_est, v: vel.v, omega: vel.omega }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub id: u8,
    #[serde(flatten)]
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum EventData {
    /// First line: the effective configuration.
    Header { format: u32, config: Box<ScenarioConfig> },
    Frame {
        index: u64,
        /// FNV-1a 64 digest, 16 hex digits.
        digest: String,
        detections: Vec<DetectionRecord>,
        /// Base64 OVF1 dump, only with full frames enabled.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ovf1: Option<String>,
    },
    Tracks { tracks: Vec<TrackRecord> },
    Command {
        robot_id: u8,
        seq: u16,
        v: f64,
        omega: f64,
        estop: bool,
        /// `None` when the channel dropped it.
        deliver_at: Option<f64>,
    },
    Delivery { robot_id: u8, seq: u16, apply_at: f64, stale: bool },
    ModeTransition { robot_id: u8, from: WanderMode, to: WanderMode },
    MissionEdit { robot_id: u8, mode: MissionMode },
    /// True state after a simulation step.
    World { robots: Vec<RobotPose>, obstacles: Vec<Point2>, superseded: u64 },
    End { steps: u64, frames: u64, control_ticks: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub data: EventData,
}

impl Event {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Error)]
#[error("trace line {line}: {message}")]
pub struct ReplayError {
    /// 1-based; one past the last line for a missing end event.
    pub line: usize,
    pub message: String,
}

/// Reads every event, requiring a header first and an end event last.
pub fn read_events(reader: impl BufRead) -> Result<Vec<Event>, ReplayError> {
    let mut events = Vec::new();
    let mut line_no = 0;
    for line in reader.lines() {
        line_no += 1;
        let line = line.map_err(|e| ReplayError { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        if matches!(events.last(), Some(Event { data: EventData::End { .. }, .. })) {
            return Err(ReplayError { line: line_no, message: "event after end".into() });
        }
        let ev: Event = serde_json::from_str(&line)
            .map_err(|e| ReplayError { line: line_no, message: e.to_string() })?;
        match (&ev.data, events.is_empty()) {
            (EventData::Header { format, .. }, true) if *format != TRACE_FORMAT => {
                return Err(ReplayError { line: line_no, message: format!("unsupported trace format {format}") });
            }
            (EventData::Header { .. }, true) => {}
            (_, true) => return Err(ReplayError { line: line_no, message: "trace must start with a header".into() }),
            (EventData::Header { .. }, false) => {
                return Err(ReplayError { line: line_no, message: "duplicate header".into() })
            }
            _ => {}
        }
        events.push(ev);
    }
    match events.last() {
        Some(Event { data: EventData::End { .. }, .. }) => Ok(events),
        None => Err(ReplayError { line: 1, message: "empty trace".into() }),
        Some(_) => Err(ReplayError { line: line_no + 1, message: "truncated trace: no end event".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_have_t_kind_data() {
        let ev = Event { t: 0.25, data: EventData::End { steps: 3, frames: 1, control_ticks: 1 } };
        let v: serde_json::Value = serde_json::from_str(&ev.to_line()).unwrap();
        assert_eq!(v["t"], 0.25);
        assert_eq!(v["kind"], "end");
        assert_eq!(v["data"]["steps"], 3);
        assert_eq!(serde_json::from_value::<Event>(v).unwrap(), ev);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let pose = Pose2 { x: 0.1 + 0.2, y: -1.0 / 3.0, theta: std::f64::consts::PI };
        let ev = Event {
            t: 1.0 / 7.0,
            data: EventData::World {
                robots: vec![RobotPose { id: 2, pose }],
                obstacles: vec![Point2::new(1e-300, 5.0e15 + 0.5)],
                superseded: 0,
            },
        };
        let back: Event = serde_json::from_str(&ev.to_line()).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn missing_header_is_line_one() {
        let line = Event { t: 0.0, data: EventData::End { steps: 0, frames: 0, control_ticks: 0 } }.to_line();
        let e = read_events(line.as_bytes()).unwrap_err();
        assert_eq!(e.line, 1);
    }
}

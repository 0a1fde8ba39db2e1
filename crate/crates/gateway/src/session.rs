//! Per-connection request validation.

use crate::driver::RunControl;
use crate::protocol::{
    check_path, check_polygon, ClientMessage, ErrorCode, HelloInfo, ReplyBody, RequestError, DEFAULT_RATE_HZ,
    MAX_RATE_HZ, MIN_RATE_HZ,
};
use serde_json::Value;
use skywatch_core::coordination::MissionMode;
use skywatch_core::geometry::{Point2, Polygon};
use skywatch_core::runner::{validate_mode, ScenarioConfig};
use std::collections::BTreeSet;

/// Fixed facts about the served scenario.
#[derive(Debug, Clone)]
pub struct Scene {
    pub arena: Polygon,
    pub robots: BTreeSet<u8>,
    pub homography: [f64; 9],
    pub image_width: u32,
    pub image_height: u32,
}

impl Scene {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            arena: cfg.arena.clone(),
            robots: cfg.robots.iter().map(|r| r.id).collect(),
            homography: cfg.camera.homography.to_row_array(),
            image_width: cfg.camera.width,
            image_height: cfg.camera.height,
        }
    }

    fn robot(&self, id: u8) -> Result<u8, RequestError> {
        if self.robots.contains(&id) {
            Ok(id)
        } else {
            Err(RequestError::new(ErrorCode::UnknownRobot, format!("no robot with id {id}")))
        }
    }
}

/// What the connection must do to answer a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Reply(ReplyBody),
    Edit { robot_id: u8, mode: MissionMode, numbered: bool },
    Run(RunControl),
}

#[derive(Debug, Clone)]
pub struct Session {
    greeted: bool,
    rate_hz: f64,
}

impl Default for Session {
    fn default() -> Self {
        Self { greeted: false, rate_hz: DEFAULT_RATE_HZ }
    }
}

impl Session {
    /// Snapshot rate once greeted, `None` before `hello`.
    pub fn snapshot_rate(&self) -> Option<f64> {
        self.greeted.then_some(self.rate_hz)
    }

    pub fn decide(&mut self, scene: &Scene, msg: ClientMessage) -> Result<Action, RequestError> {
        if !self.greeted && msg != (ClientMessage::Hello {}) {
            return Err(RequestError::bad_message("send hello first"));
        }
        Ok(match msg {
            ClientMessage::Hello {} => {
                self.greeted = true;
                Action::Reply(ReplyBody::Hello(HelloInfo {
                    homography: scene.homography,
                    image_width: scene.image_width,
                    image_height: scene.image_height,
                    arena: scene.arena.vertices().to_vec(),
                    robots: scene.robots.iter().copied().collect(),
                    rate_hz: self.rate_hz,
                }))
            }
            ClientMessage::SetPath { robot_id, points } => Action::Edit {
                robot_id: scene.robot(robot_id)?,
                mode: MissionMode::FollowPath { path: check_path(&scene.arena, points)? },
                numbered: true,
            },
            ClientMessage::SetBoundary { robot_id, points } => Action::Edit {
                robot_id: scene.robot(robot_id)?,
                mode: MissionMode::BoundedWander { boundary: check_polygon(&scene.arena, points)? },
                numbered: true,
            },
            ClientMessage::SetMode { robot_id, mode } => Action::Edit {
                robot_id: scene.robot(robot_id)?,
                mode: parse_mode(&scene.arena, mode)?,
                numbered: false,
            },
            ClientMessage::Start {} => Action::Run(RunControl::Start),
            ClientMessage::Pause {} => Action::Run(RunControl::Pause),
            ClientMessage::Reset {} => Action::Run(RunControl::Reset),
            ClientMessage::Subscribe { rate_hz } => {
                if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&rate_hz) {
                    return Err(RequestError::bad_message(format!(
                        "rate_hz must be in [{MIN_RATE_HZ}, {MAX_RATE_HZ}], got {rate_hz}"
                    )));
                }
                self.rate_hz = rate_hz;
                Action::Reply(ReplyBody::Subscribed { rate_hz })
            }
        })
    }
}

/// Parses a full mission mode, checking its geometry like a drawn edit.
fn parse_mode(arena: &Polygon, mode: Value) -> Result<MissionMode, RequestError> {
    let points = |key: &str| -> Result<Option<Vec<Point2>>, RequestError> {
        mode.get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| RequestError::bad_message(format!("{key}: {e}"))))
            .transpose()
    };
    match mode.get("type").and_then(Value::as_str) {
        Some("follow_path") => {
            check_path(arena, points("path")?.unwrap_or_default())?;
        }
        Some("bounded_wander") => {
            check_polygon(arena, points("boundary")?.unwrap_or_default())?;
        }
        Some("coverage") => {
            check_polygon(arena, points("area")?.unwrap_or_default())?;
        }
        _ => {}
    }
    let mode: MissionMode = serde_json::from_value(mode).map_err(|e| RequestError::bad_message(e.to_string()))?;
    validate_mode(&mode).map_err(|(path, reason)| RequestError::bad_message(format!("{path}: {reason}")))?;
    Ok(mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn scene() -> Scene {
        let cfg = ScenarioConfig::from_json(
            &json!({
                "duration_s": 1.0,
                "arena": [[0, 0], [10, 0], [10, 10], [0, 10]],
                "robots": [{"id": 0, "pose": {"x": 1, "y": 1, "theta": 0}}, {"id": 4, "pose": {"x": 5, "y": 5, "theta": 0}}],
                "camera": {"homography": [50, 0, 0, 0, -50, 500, 0, 0, 1], "width": 500, "height": 500}
            })
            .to_string(),
        )
        .unwrap();
        Scene::new(&cfg)
    }

    fn greeted() -> Session {
        let mut s = Session::default();
        s.decide(&scene(), ClientMessage::Hello {}).unwrap();
        s
    }

    fn pts(v: &[[f64; 2]]) -> Vec<Point2> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn hello_gates_everything_else() {
        let sc = scene();
        let mut s = Session::default();
        assert_eq!(s.snapshot_rate(), None);
        assert_eq!(s.decide(&sc, ClientMessage::Start {}).unwrap_err().code, ErrorCode::BadMessage);
        let Action::Reply(ReplyBody::Hello(info)) = s.decide(&sc, ClientMessage::Hello {}).unwrap() else {
            panic!("expected hello reply");
        };
        assert_eq!(info.homography, [50.0, 0.0, 0.0, 0.0, -50.0, 500.0, 0.0, 0.0, 1.0]);
        assert_eq!(info.robots, vec![0, 4]);
        assert_eq!(info.arena.len(), 4);
        assert_eq!(s.snapshot_rate(), Some(DEFAULT_RATE_HZ));
        assert_eq!(s.decide(&sc, ClientMessage::Start {}).unwrap(), Action::Run(RunControl::Start));
    }

    #[test]
    fn drawn_edits() {
        let sc = scene();
        let mut s = greeted();
        let five = pts(&[[1.0, 1.0], [3.0, 2.0], [5.0, 1.0], [7.0, 2.0], [9.0, 1.0]]);
        let a = s.decide(&sc, ClientMessage::SetPath { robot_id: 4, points: five }).unwrap();
        assert!(matches!(a, Action::Edit { robot_id: 4, mode: MissionMode::FollowPath { .. }, numbered: true }));
        let e = s.decide(&sc, ClientMessage::SetPath { robot_id: 3, points: pts(&[[1.0, 1.0], [2.0, 2.0]]) });
        assert_eq!(e.unwrap_err().code, ErrorCode::UnknownRobot);
        let bow_tie = pts(&[[2.0, 2.0], [8.0, 8.0], [8.0, 2.0], [2.0, 8.0]]);
        let e = s.decide(&sc, ClientMessage::SetBoundary { robot_id: 0, points: bow_tie });
        assert_eq!(e.unwrap_err().code, ErrorCode::InvalidPolygon);
        let square = pts(&[[2.0, 2.0], [8.0, 2.0], [8.0, 8.0], [2.0, 8.0]]);
        let a = s.decide(&sc, ClientMessage::SetBoundary { robot_id: 0, points: square }).unwrap();
        assert!(matches!(a, Action::Edit { mode: MissionMode::BoundedWander { .. }, .. }));
    }

    #[test]
    fn set_mode_geometry_uses_edit_codes() {
        let sc = scene();
        let mut s = greeted();
        let mode = |m: Value| ClientMessage::SetMode { robot_id: 0, mode: m };
        let ok = s.decide(&sc, mode(json!({"type": "idle"}))).unwrap();
        assert_eq!(ok, Action::Edit { robot_id: 0, mode: MissionMode::Idle, numbered: false });
        let cases = [
            (json!({"type": "bounded_wander", "boundary": [[2, 2], [8, 8], [8, 2], [2, 8]]}), ErrorCode::InvalidPolygon),
            (json!({"type": "follow_path", "path": [[1, 1], [12, 1]]}), ErrorCode::OutsideArena),
            (json!({"type": "coverage", "area": [[1, 1], [2, 2]], "lane_width": 1, "tool_radius": 0.5}), ErrorCode::TooFewPoints),
            (json!({"type": "coverage", "area": [[1, 1], [9, 1], [9, 9], [1, 9]], "lane_width": 1, "tool_radius": 0}), ErrorCode::BadMessage),
            (json!({"type": "fly"}), ErrorCode::BadMessage),
        ];
        for (m, code) in cases {
            assert_eq!(s.decide(&sc, mode(m.clone())).unwrap_err().code, code, "{m}");
        }
    }

    #[test]
    fn subscribe_range() {
        let sc = scene();
        let mut s = greeted();
        for bad in [0.5, 31.0, f64::NAN] {
            assert_eq!(s.decide(&sc, ClientMessage::Subscribe { rate_hz: bad }).unwrap_err().code, ErrorCode::BadMessage);
        }
        assert_eq!(s.snapshot_rate(), Some(DEFAULT_RATE_HZ));
        for good in [1.0, 30.0, 12.5] {
            s.decide(&sc, ClientMessage::Subscribe { rate_hz: good }).unwrap();
            assert_eq!(s.snapshot_rate(), Some(good));
        }
    }
}

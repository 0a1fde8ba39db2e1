//! Wire types: client requests, replies and snapshots.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use skywatch_core::geometry::{GeometryError, Point2, Polygon, Polyline};
use skywatch_core::perception::{PixelRect, TrackStatus};
use skywatch_core::sim::Pose2;
use std::fmt;

pub const MIN_RATE_HZ: f64 = 1.0;
pub const MAX_RATE_HZ: f64 = 30.0;
pub const DEFAULT_RATE_HZ: f64 = 10.0;

/// A request from the console. Every message also carries `msg_id`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {},
    SetPath { robot_id: u8, points: Vec<Point2> },
    SetBoundary { robot_id: u8, points: Vec<Point2> },
    SetMode { robot_id: u8, mode: Value },
    Start {},
    Pause {},
    Reset {},
    Subscribe { rate_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidPolygon,
    OutsideArena,
    TooFewPoints,
    UnknownRobot,
    BadMessage,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::InvalidPolygon => "invalid_polygon",
            ErrorCode::OutsideArena => "outside_arena",
            ErrorCode::TooFewPoints => "too_few_points",
            ErrorCode::UnknownRobot => "unknown_robot",
            ErrorCode::BadMessage => "bad_message",
        };
        f.write_str(s)
    }
}

/// A rejected request.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {detail}")]
pub struct RequestError {
    pub code: ErrorCode,
    pub detail: String,
}

impl RequestError {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self { code, detail: detail.into() }
    }

    pub fn bad_message(detail: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadMessage, detail)
    }
}

fn geometry_error(e: GeometryError) -> RequestError {
    let code = match e {
        GeometryError::TooFewVertices(_) | GeometryError::TooFewPathPoints(_) => ErrorCode::TooFewPoints,
        GeometryError::SelfIntersecting(..) | GeometryError::ZeroArea => ErrorCode::InvalidPolygon,
        _ => ErrorCode::BadMessage,
    };
    RequestError::new(code, e.to_string())
}

/// Splits a raw text frame into its `msg_id` and request.
///
/// The id is recovered whenever the frame is a JSON object with a valid
/// `msg_id`, so that even malformed requests can be answered.
pub fn parse_client_message(text: &str) -> (Option<u32>, Result<ClientMessage, RequestError>) {
    let mut value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return (None, Err(RequestError::bad_message(format!("not JSON: {e}")))),
    };
    let Some(obj) = value.as_object_mut() else {
        return (None, Err(RequestError::bad_message("expected a JSON object")));
    };
    let msg_id = match obj.remove("msg_id") {
        Some(v) => match v.as_u64().and_then(|n| u32::try_from(n).ok()) {
            Some(id) => id,
            None => return (None, Err(RequestError::bad_message("msg_id must be a u32"))),
        },
        None => return (None, Err(RequestError::bad_message("missing msg_id"))),
    };
    let msg = serde_json::from_value(value).map_err(|e| RequestError::bad_message(e.to_string()));
    (Some(msg_id), msg)
}

/// Checks a drawn path: at least 2 points, all inside `arena`.
pub fn check_path(arena: &Polygon, points: Vec<Point2>) -> Result<Polyline, RequestError> {
    if points.len() < 2 {
        return Err(RequestError::new(ErrorCode::TooFewPoints, format!("path needs 2 points, got {}", points.len())));
    }
    check_inside(arena, &points)?;
    Polyline::new(points).map_err(geometry_error)
}

/// Checks a drawn boundary: at least 3 points, simple, inside `arena`.
pub fn check_polygon(arena: &Polygon, points: Vec<Point2>) -> Result<Polygon, RequestError> {
    if points.len() < 3 {
        return Err(RequestError::new(
            ErrorCode::TooFewPoints,
            format!("boundary needs 3 points, got {}", points.len()),
        ));
    }
    check_inside(arena, &points)?;
    Polygon::new(points).map_err(geometry_error)
}

fn check_inside(arena: &Polygon, points: &[Point2]) -> Result<(), RequestError> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(RequestError::bad_message("non-finite coordinate"));
    }
    match points.iter().position(|&p| !arena.contains(p)) {
        Some(i) => Err(RequestError::new(
            ErrorCode::OutsideArena,
            format!("point {i} ({}, {}) is outside the arena", points[i].x, points[i].y),
        )),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Idle,
    Running,
    Paused,
}

/// Scene description sent in reply to `hello`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloInfo {
    /// Ground-to-image homography, row-major.
    pub homography: [f64; 9],
    pub image_width: u32,
    pub image_height: u32,
    pub arena: Vec<Point2>,
    pub robots: Vec<u8>,
    pub rate_hz: f64,
}

/// Payload of a reply, flattened next to `msg_id` and `ok`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReplyBody {
    Hello(HelloInfo),
    PathId { path_id: u64 },
    RunState { run_state: RunState },
    Subscribed { rate_hz: f64 },
    Error { code: ErrorCode, detail: String },
    Empty {},
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reply {
    pub msg_id: Option<u32>,
    pub ok: bool,
    #[serde(flatten)]
    pub body: ReplyBody,
}

impl Reply {
    pub fn ok(msg_id: u32, body: ReplyBody) -> Self {
        Self { msg_id: Some(msg_id), ok: true, body }
    }

    pub fn error(msg_id: Option<u32>, e: RequestError) -> Self {
        Self { msg_id, ok: false, body: ReplyBody::Error { code: e.code, detail: e.detail } }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotTag {
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub pose: Pose2,
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: u8,
    /// Simulated ground truth.
    pub pose: Pose2,
    pub track: Option<TrackView>,
    /// Overlay rectangle around a live track.
    pub bbox: Option<PixelRect>,
    pub mode: String,
    /// Path being followed, including planned coverage sweeps.
    pub path: Option<Vec<Point2>>,
    /// Wander boundary or coverage area.
    pub boundary: Option<Vec<Point2>>,
    pub coverage: Option<f64>,
}

/// Immutable view of the running scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(rename = "type")]
    pub tag: SnapshotTag,
    pub t: f64,
    /// Incremented on every reset; `t` never decreases within an epoch.
    pub epoch: u64,
    pub run_state: RunState,
    pub robots: Vec<RobotView>,
    /// Mean over robots in coverage mode, 0 when there are none.
    pub coverage: f64,
    pub frame_digest: Option<String>,
}

impl Snapshot {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn arena() -> Polygon {
        Polygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap()
    }

    fn pts(v: &[[f64; 2]]) -> Vec<Point2> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn parses_tagged_messages() {
        let (id, msg) = parse_client_message(r#"{"msg_id": 7, "type": "set_path", "robot_id": 2, "points": [[1, 1], [2, 2]]}"#);
        assert_eq!(id, Some(7));
        assert_eq!(msg.unwrap(), ClientMessage::SetPath { robot_id: 2, points: pts(&[[1.0, 1.0], [2.0, 2.0]]) });
        let (id, msg) = parse_client_message(r#"{"msg_id": 1, "type": "subscribe", "rate_hz": 5}"#);
        assert_eq!(id, Some(1));
        assert_eq!(msg.unwrap(), ClientMessage::Subscribe { rate_hz: 5.0 });
        assert_eq!(parse_client_message(r#"{"msg_id": 0, "type": "hello"}"#).1.unwrap(), ClientMessage::Hello {});
    }

    #[test]
    fn malformed_messages_are_bad_message() {
        let cases = [
            (r#"{"msg_id": 3, "type": "teleport"}"#, Some(3)),
            (r#"{"msg_id": 4, "type": "start", "extra": 1}"#, Some(4)),
            (r#"{"msg_id": 5}"#, Some(5)),
            (r#"{"msg_id": 6, "type": "set_path", "robot_id": 300, "points": []}"#, Some(6)),
            (r#"{"type": "start"}"#, None),
            (r#"{"msg_id": -1, "type": "start"}"#, None),
            (r#"{"msg_id": 4294967296, "type": "start"}"#, None),
            ("[1, 2]", None),
            ("not json", None),
        ];
        for (text, want_id) in cases {
            let (id, msg) = parse_client_message(text);
            assert_eq!(id, want_id, "{text}");
            assert_eq!(msg.unwrap_err().code, ErrorCode::BadMessage, "{text}");
        }
    }

    #[test]
    fn path_checks() {
        let a = arena();
        assert_eq!(check_path(&a, pts(&[[1.0, 1.0], [2.0, 2.0], [3.0, 1.0], [4.0, 2.0], [5.0, 1.0]])).unwrap().points().len(), 5);
        assert_eq!(check_path(&a, pts(&[[1.0, 1.0]])).unwrap_err().code, ErrorCode::TooFewPoints);
        assert_eq!(check_path(&a, pts(&[[1.0, 1.0], [11.0, 1.0]])).unwrap_err().code, ErrorCode::OutsideArena);
        assert_eq!(check_path(&a, pts(&[[1.0, 1.0], [1.0, 1.0]])).unwrap_err().code, ErrorCode::BadMessage);
    }

    #[test]
    fn polygon_checks() {
        let a = arena();
        assert!(check_polygon(&a, pts(&[[1.0, 1.0], [4.0, 1.0], [4.0, 4.0], [1.0, 4.0]])).is_ok());
        let bow_tie = pts(&[[1.0, 1.0], [4.0, 4.0], [4.0, 1.0], [1.0, 4.0]]);
        assert_eq!(check_polygon(&a, bow_tie).unwrap_err().code, ErrorCode::InvalidPolygon);
        let flat = pts(&[[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]]);
        assert_eq!(check_polygon(&a, flat).unwrap_err().code, ErrorCode::InvalidPolygon);
        assert_eq!(check_polygon(&a, pts(&[[1.0, 1.0], [2.0, 2.0]])).unwrap_err().code, ErrorCode::TooFewPoints);
        let outside = pts(&[[1.0, 1.0], [12.0, 1.0], [4.0, 4.0]]);
        assert_eq!(check_polygon(&a, outside).unwrap_err().code, ErrorCode::OutsideArena);
    }

    #[test]
    fn reply_shapes() {
        let ok: Value = serde_json::from_str(&Reply::ok(9, ReplyBody::PathId { path_id: 1 }).to_text()).unwrap();
        assert_eq!(ok, json!({"msg_id": 9, "ok": true, "path_id": 1}));
        let err = Reply::error(Some(2), RequestError::new(ErrorCode::InvalidPolygon, "edges 0 and 2 intersect"));
        let err: Value = serde_json::from_str(&err.to_text()).unwrap();
        assert_eq!(err, json!({"msg_id": 2, "ok": false, "code": "invalid_polygon", "detail": "edges 0 and 2 intersect"}));
        let empty: Value = serde_json::from_str(&Reply::ok(3, ReplyBody::Empty {}).to_text()).unwrap();
        assert_eq!(empty, json!({"msg_id": 3, "ok": true}));
        let anon: Value = serde_json::from_str(&Reply::error(None, RequestError::bad_message("x")).to_text()).unwrap();
        assert_eq!(anon["msg_id"], Value::Null);
    }
}

//! Ground-truth world: unicycle robots behind actuation queues, scripted disk
//! obstacles, arena markings, and the rasterizer that produces the overhead
//! camera's palette-indexed frames.

use crate::geometry::{wrap_angle, GeometryError, Homography, Point2, Polygon, Polyline};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Palette indices. Bit-exact, shared with perception and the frame dump.
pub mod palette {
    pub const BACKGROUND: u8 = 0;
    pub const ARENA: u8 = 1;
    pub const MARKING: u8 = 2;
    pub const OBSTACLE: u8 = 5;
    pub const BODY: u8 = 8;
    pub const FRONT_BASE: u8 = 16;
    pub const REAR_BASE: u8 = 64;
    pub const MAX_ROBOT_ID: u8 = 31;

    pub const fn front(id: u8) -> u8 {
        FRONT_BASE + id
    }

    pub const fn rear(id: u8) -> u8 {
        REAR_BASE + id
    }

    /// Front-marker palette value → robot id.
    pub fn front_id(v: u8) -> Option<u8> {
        (FRONT_BASE..=FRONT_BASE + MAX_ROBOT_ID).contains(&v).then(|| v - FRONT_BASE)
    }

    pub fn rear_id(v: u8) -> Option<u8> {
        (REAR_BASE..=REAR_BASE + MAX_ROBOT_ID).contains(&v).then(|| v - REAR_BASE)
    }

    pub fn is_valid(v: u8) -> bool {
        matches!(v, BACKGROUND | ARENA | MARKING | OBSTACLE | BODY)
            || front_id(v).is_some()
            || rear_id(v).is_some()
    }
}

/// Below this |ω| the straight-line update is used.
const OMEGA_EPS: f64 = 1e-9;
const TIME_EPS: f64 = 1e-12;
/// Half-width of rasterized strokes, in pixels.
const STROKE_HALF_WIDTH_PX: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("unknown robot id {0}")]
    UnknownRobot(u8),
    #[error("apply time {apply_at} is before world time {now}")]
    PastTime { apply_at: f64, now: f64 },
    #[error("duplicate robot id {0}")]
    DuplicateRobot(u8),
    #[error("robot id {0} exceeds 31")]
    RobotIdOutOfRange(u8),
    #[error("obstacle script needs at least one waypoint with non-decreasing times")]
    BadScript,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Planar pose: meters and radians in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Point at `offset` meters along the heading.
    pub fn along(&self, offset: f64) -> Point2 {
        self.position() + self.heading() * offset
    }

    /// Expresses a world point in this pose's body frame (x forward, y left).
    pub fn to_local(&self, p: Point2) -> Point2 {
        let d = p - self.position();
        let (s, c) = self.theta.sin_cos();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Exact constant-(v, ω) unicycle motion over `dt`.
pub fn integrate_unicycle(pose: Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    let th = pose.theta;
    if omega.abs() < OMEGA_EPS {
        Pose2::new(pose.x + v * dt * th.cos(), pose.y + v * dt * th.sin(), th + omega * dt)
    } else {
        let r = v / omega;
        let th1 = th + omega * dt;
        Pose2::new(pose.x + r * (th1.sin() - th.sin()), pose.y + r * (th.cos() - th1.cos()), th1)
    }
}

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Static description of a robot: limits and marker layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: u8,
    pub pose: Pose2,
    #[serde(default = "defaults::v_max")]
    pub v_max: f64,
    #[serde(default = "defaults::omega_max")]
    pub omega_max: f64,
    #[serde(default = "defaults::body_radius")]
    pub body_radius: f64,
    #[serde(default = "defaults::front_offset")]
    pub front_marker_offset: f64,
    #[serde(default = "defaults::rear_offset")]
    pub rear_marker_offset: f64,
    #[serde(default = "defaults::marker_radius")]
    pub marker_radius: f64,
}

mod defaults {
    pub fn v_max() -> f64 {
        1.0
    }
    pub fn omega_max() -> f64 {
        2.0
    }
    pub fn body_radius() -> f64 {
        0.2
    }
    pub fn front_offset() -> f64 {
        0.15
    }
    pub fn rear_offset() -> f64 {
        -0.15
    }
    pub fn marker_radius() -> f64 {
        0.06
    }
}

impl RobotSpec {
    pub fn new(id: u8, pose: Pose2) -> Self {
        Self {
            id,
            pose,
            v_max: defaults::v_max(),
            omega_max: defaults::omega_max(),
            body_radius: defaults::body_radius(),
            front_marker_offset: defaults::front_offset(),
            rear_marker_offset: defaults::rear_offset(),
            marker_radius: defaults::marker_radius(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingCommand {
    pub apply_at: f64,
    pub cmd: Twist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub spec: RobotSpec,
    pub pose: Pose2,
    pub applied: Twist,
    /// Sorted by `apply_at`; equal times keep insertion order.
    pub pending: Vec<PendingCommand>,
    /// Commands that were overwritten by a later one before a step used them.
    pub superseded: u64,
    pub distance_travelled: f64,
}

impl RobotState {
    pub fn new(spec: RobotSpec) -> Self {
        Self {
            pose: spec.pose,
            spec,
            applied: Twist::ZERO,
            pending: Vec::new(),
            superseded: 0,
            distance_travelled: 0.0,
        }
    }

    pub fn id(&self) -> u8 {
        self.spec.id
    }

    pub fn clamp(&self, cmd: Twist) -> Twist {
        Twist {
            v: cmd.v.clamp(-self.spec.v_max, self.spec.v_max),
            omega: cmd.omega.clamp(-self.spec.omega_max, self.spec.omega_max),
        }
    }

    pub fn front_marker(&self) -> Point2 {
        self.pose.along(self.spec.front_marker_offset)
    }

    pub fn rear_marker(&self) -> Point2 {
        self.pose.along(self.spec.rear_marker_offset)
    }
}

/// Timed waypoint of an obstacle script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Disk obstacle moving along a piecewise-linear script, holding still
/// before the first and after the last waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub radius: f64,
    pub script: Vec<Waypoint>,
}

impl ObstacleSpec {
    pub fn stationary(center: Point2, radius: f64) -> Self {
        Self { radius, script: vec![Waypoint { t: 0.0, x: center.x, y: center.y }] }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ordered = self.script.windows(2).all(|w| w[0].t <= w[1].t);
        let finite = self.script.iter().all(|w| w.t.is_finite() && w.x.is_finite() && w.y.is_finite());
        if self.script.is_empty() || !ordered || !finite || !(self.radius > 0.0) {
            return Err(SimError::BadScript);
        }
        Ok(())
    }

    pub fn position_at(&self, t: f64) -> Point2 {
        let first = self.script[0];
        if t <= first.t {
            return Point2::new(first.x, first.y);
        }
        for w in self.script.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t <= b.t {
                let span = b.t - a.t;
                let k = if span > 0.0 { (t - a.t) / span } else { 1.0 };
                return Point2::new(a.x + k * (b.x - a.x), a.y + k * (b.y - a.y));
            }
        }
        let last = self.script[self.script.len() - 1];
        Point2::new(last.x, last.y)
    }

    pub fn velocity_at(&self, t: f64) -> Point2 {
        for w in self.script.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t >= a.t && t < b.t && b.t > a.t {
                return Point2::new((b.x - a.x) / (b.t - a.t), (b.y - a.y) / (b.t - a.t));
            }
        }
        Point2::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub spec: ObstacleSpec,
    pub center: Point2,
}

/// Painted ground geometry visible to the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marking {
    Polygon { points: Polygon },
    Polyline { points: Polyline },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub robots: Vec<RobotState>,
    pub obstacles: Vec<ObstacleState>,
    pub arena: Polygon,
    pub markings: Vec<Marking>,
}

impl WorldState {
    pub fn new(
        arena: Polygon,
        robots: Vec<RobotSpec>,
        obstacles: Vec<ObstacleSpec>,
        markings: Vec<Marking>,
    ) -> Result<Self, SimError> {
        let mut seen = [false; 32];
        for r in &robots {
            if r.id > palette::MAX_ROBOT_ID {
                return Err(SimError::RobotIdOutOfRange(r.id));
            }
            if std::mem::replace(&mut seen[r.id as usize], true) {
                return Err(SimError::DuplicateRobot(r.id));
            }
        }
        for o in &obstacles {
            o.validate()?;
        }
        Ok(Self {
            t: 0.0,
            robots: robots.into_iter().map(RobotState::new).collect(),
            obstacles: obstacles
                .into_iter()
                .map(|spec| ObstacleState { center: spec.position_at(0.0), spec })
                .collect(),
            arena,
            markings,
        })
    }

    pub fn robot(&self, id: u8) -> Option<&RobotState> {
        self.robots.iter().find(|r| r.id() == id)
    }

    fn robot_mut(&mut self, id: u8) -> Option<&mut RobotState> {
        self.robots.iter_mut().find(|r| r.id() == id)
    }

    /// Queues `cmd` (clamped to the robot's limits) to take effect at
    /// `apply_at`.
    pub fn schedule(&mut self, robot_id: u8, cmd: Twist, apply_at: f64) -> Result<(), SimError> {
        let now = self.t;
        if apply_at < now - TIME_EPS {
            return Err(SimError::PastTime { apply_at, now });
        }
        let robot = self.robot_mut(robot_id).ok_or(SimError::UnknownRobot(robot_id))?;
        let cmd = robot.clamp(cmd);
        let at = robot.pending.partition_point(|p| p.apply_at <= apply_at);
        robot.pending.insert(at, PendingCommand { apply_at, cmd });
        Ok(())
    }

    /// Advances the world by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        if !(dt > 0.0) {
            return Err(SimError::NonPositiveDt(dt));
        }
        let t = self.t;
        for robot in &mut self.robots {
            let due = robot.pending.partition_point(|p| p.apply_at <= t + TIME_EPS);
            if due > 0 {
                robot.superseded += (due - 1) as u64;
                robot.applied = robot.pending[due - 1].cmd;
                robot.pending.drain(..due);
            }
            let Twist { v, omega } = robot.applied;
            robot.pose = integrate_unicycle(robot.pose, v, omega, dt);
            robot.distance_travelled += v.abs() * dt;
        }
        self.t = t + dt;
        for o in &mut self.obstacles {
            o.center = o.spec.position_at(self.t);
        }
        Ok(())
    }

    /// Steps to the absolute time `t_next`, avoiding accumulated drift when
    /// the caller keeps its own clock.
    pub fn advance_to(&mut self, t_next: f64) -> Result<(), SimError> {
        self.step(t_next - self.t)?;
        self.t = t_next;
        for o in &mut self.obstacles {
            o.center = o.spec.position_at(t_next);
        }
        Ok(())
    }
}

/// Value-semantics wrapper around [`WorldState::step`].
pub fn step_world(world: &WorldState, dt: f64) -> Result<WorldState, SimError> {
    let mut next = world.clone();
    next.step(dt)?;
    Ok(next)
}

pub fn schedule_command(
    world: &WorldState,
    robot_id: u8,
    cmd: Twist,
    apply_at: f64,
) -> Result<WorldState, SimError> {
    let mut next = world.clone();
    next.schedule(robot_id, cmd, apply_at)?;
    Ok(next)
}

// ── Frames ───────────────────────────────────────────────────────────────

pub const FRAME_MAGIC: &[u8; 4] = b"OVF1";
pub const FRAME_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameDumpError {
    #[error("frame dump shorter than its header")]
    Short,
    #[error("bad frame magic")]
    BadMagic,
    #[error("pixel payload length {got} does not match {width}x{height}")]
    Length { width: u32, height: u32, got: usize },
    #[error("palette index {0} is not defined")]
    BadPalette(u8),
}

/// Palette-indexed overhead image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub t: f64,
}

impl Frame {
    pub fn blank(width: u32, height: u32, t: f64) -> Self {
        Self { width, height, pixels: vec![palette::BACKGROUND; (width * height) as usize], t }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = v;
    }

    /// Binary dump: `OVF1`, width, height, t in µs (all u32 LE), pixels.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.pixels.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        let micros = (self.t * 1e6).round().clamp(0.0, u32::MAX as f64) as u32;
        out.extend_from_slice(&micros.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, FrameDumpError> {
        if b.len() < FRAME_HEADER_LEN {
            return Err(FrameDumpError::Short);
        }
        if &b[0..4] != FRAME_MAGIC {
            return Err(FrameDumpError::BadMagic);
        }
        let word = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        let (width, height, micros) = (word(4), word(8), word(12));
        let pixels = b[FRAME_HEADER_LEN..].to_vec();
        if pixels.len() as u64 != width as u64 * height as u64 {
            return Err(FrameDumpError::Length { width, height, got: pixels.len() });
        }
        if let Some(&bad) = pixels.iter().find(|&&v| !palette::is_valid(v)) {
            return Err(FrameDumpError::BadPalette(bad));
        }
        Ok(Self { width, height, pixels, t: micros as f64 * 1e-6 })
    }

    /// 64-bit FNV-1a over the binary dump.
    pub fn digest(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        self.to_bytes()
            .iter()
            .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
    }
}

/// Inclusive pixel index range covering `[lo, hi]` in continuous pixel
/// coordinates, clipped to `0..n`.
fn pixel_span(lo: f64, hi: f64, n: u32) -> Option<(u32, u32)> {
    if !(lo.is_finite() && hi.is_finite()) || hi < 0.0 || lo >= n as f64 || n == 0 {
        return None;
    }
    let a = lo.floor().max(0.0) as u32;
    let b = (hi.ceil() as i64).clamp(0, n as i64 - 1) as u32;
    (a <= b).then_some((a, b))
}

fn stroke_segment(frame: &mut Frame, h: &Homography, a: Point2, b: Point2, value: u8) {
    let (Ok(pa), Ok(pb)) = (h.project(a), h.project(b)) else {
        return;
    };
    let r = STROKE_HALF_WIDTH_PX;
    let Some((x0, x1)) = pixel_span(pa.x.min(pb.x) - r - 1.0, pa.x.max(pb.x) + r + 1.0, frame.width) else {
        return;
    };
    let Some((y0, y1)) = pixel_span(pa.y.min(pb.y) - r - 1.0, pa.y.max(pb.y) + r + 1.0, frame.height) else {
        return;
    };
    for py in y0..=y1 {
        for px in x0..=x1 {
            let c = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
            if crate::geometry::distance_to_segment_sq(pa, pb, c) <= r * r {
                frame.set(px, py, value);
            }
        }
    }
}

/// Fills every pixel whose center unprojects to within `radius` of `center`.
fn fill_disk(frame: &mut Frame, h: &Homography, center: Point2, radius: f64, value: u8) {
    // Pixel bounding box from a ring of points slightly outside the disk.
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..32 {
        let a = k as f64 * std::f64::consts::TAU / 32.0;
        let Ok(q) = h.project(center + Point2::from_polar(radius * 1.05, a)) else {
            return;
        };
        lo.x = lo.x.min(q.x);
        lo.y = lo.y.min(q.y);
        hi.x = hi.x.max(q.x);
        hi.y = hi.y.max(q.y);
    }
    let Some((x0, x1)) = pixel_span(lo.x - 1.0, hi.x + 1.0, frame.width) else {
        return;
    };
    let Some((y0, y1)) = pixel_span(lo.y - 1.0, hi.y + 1.0, frame.height) else {
        return;
    };
    let r2 = radius * radius;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let Ok(g) = h.unproject(Point2::new(px as f64 + 0.5, py as f64 + 0.5)) else {
                continue;
            };
            let d = g - center;
            if d.dot(d) <= r2 {
                frame.set(px, py, value);
            }
        }
    }
}

fn stroke_ring(frame: &mut Frame, h: &Homography, pts: &[Point2], closed: bool, value: u8) {
    for w in pts.windows(2) {
        stroke_segment(frame, h, w[0], w[1], value);
    }
    if closed && pts.len() > 2 {
        stroke_segment(frame, h, pts[pts.len() - 1], pts[0], value);
    }
}

/// Rasterizes the world as seen through `h`, back to front.
pub fn render_frame(world: &WorldState, h: &Homography, width: u32, height: u32) -> Frame {
    let mut frame = Frame::blank(width, height, world.t);
    stroke_ring(&mut frame, h, world.arena.vertices(), true, palette::ARENA);
    for m in &world.markings {
        match m {
            Marking::Polygon { points } => stroke_ring(&mut frame, h, points.vertices(), true, palette::MARKING),
            Marking::Polyline { points } => stroke_ring(&mut frame, h, points.points(), false, palette::MARKING),
        }
    }
    for o in &world.obstacles {
        fill_disk(&mut frame, h, o.center, o.spec.radius, palette::OBSTACLE);
    }
    for r in &world.robots {
        fill_disk(&mut frame, h, r.pose.position(), r.spec.body_radius, palette::BODY);
        fill_disk(&mut frame, h, r.rear_marker(), r.spec.marker_radius, palette::rear(r.id()));
        fill_disk(&mut frame, h, r.front_marker(), r.spec.marker_radius, palette::front(r.id()));
    }
    frame
}

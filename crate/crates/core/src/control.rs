//! Per-robot control laws: delay-compensating pose prediction, pure pursuit,
//! boundary-reflection wandering, heading regulation and the obstacle
//! safety governor. Everything here is a pure function; the wander policy's
//! mode is passed in and handed back.

use crate::geometry::{reflect_heading, segment_crossing, wrap_angle, Point2, Polygon, Polyline};
use crate::perception::Track;
use crate::sim::{integrate_unicycle, Pose2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of evenly spaced instants sampled over the prediction horizon.
pub const HORIZON_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("prediction horizon must be non-negative, got {0}")]
    NegativeTau(f64),
    #[error("pose ({x:.3}, {y:.3}) is outside the wander boundary")]
    OutsideBoundary { x: f64, y: f64 },
    #[error("invalid control parameter `{0}`")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub v_nom: f64,
    pub lookahead_m: f64,
    pub goal_tol_m: f64,
    pub k_theta: f64,
    pub heading_tol_rad: f64,
    pub horizon_s: f64,
    pub margin_m: f64,
    pub r_safe_m: f64,
    /// Loop delay compensated by prediction; zero disables prediction.
    pub tau_s: f64,
    pub omega_max: f64,
    pub v_max: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            v_nom: 0.5,
            lookahead_m: 1.0,
            goal_tol_m: 0.15,
            k_theta: 2.0,
            heading_tol_rad: 0.05,
            horizon_s: 1.0,
            margin_m: 0.3,
            r_safe_m: 0.2,
            tau_s: 0.0,
            omega_max: 1.5,
            v_max: 1.0,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            ("v_nom", self.v_nom),
            ("lookahead_m", self.lookahead_m),
            ("goal_tol_m", self.goal_tol_m),
            ("k_theta", self.k_theta),
            ("heading_tol_rad", self.heading_tol_rad),
            ("horizon_s", self.horizon_s),
            ("margin_m", self.margin_m),
            ("r_safe_m", self.r_safe_m),
            ("omega_max", self.omega_max),
            ("v_max", self.v_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::InvalidParam(name));
            }
        }
        if !(self.tau_s >= 0.0 && self.tau_s.is_finite()) {
            return Err(ControlError::InvalidParam("tau_s"));
        }
        if self.lookahead_m <= self.goal_tol_m {
            return Err(ControlError::InvalidParam("lookahead_m"));
        }
        Ok(())
    }
}

/// Velocity command for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v: f64,
    pub omega: f64,
    pub estop: bool,
}

impl Command {
    pub const STOP: Command = Command { v: 0.0, omega: 0.0, estop: false };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega, estop: false }
    }

    pub fn estop() -> Self {
        Self { v: 0.0, omega: 0.0, estop: true }
    }

    pub fn is_stop(&self) -> bool {
        self.v == 0.0 && self.omega == 0.0
    }

    fn limited(v: f64, omega: f64, p: &ControlParams) -> Self {
        Self::new(v.clamp(-p.v_max, p.v_max), omega.clamp(-p.omega_max, p.omega_max))
    }
}

/// Extrapolates the track by `tau` seconds at its estimated (v, ω).
pub fn predict_pose(track: &Track, tau: f64) -> Result<Pose2, ControlError> {
    if !(tau >= 0.0) {
        return Err(ControlError::NegativeTau(tau));
    }
    let vel = track.vel_est();
    Ok(integrate_unicycle(track.pose_est, vel.v, vel.omega, tau))
}

/// Chord curvature to a point expressed in the robot frame.
pub fn chord_curvature(local: Point2) -> f64 {
    let l2 = local.dot(local);
    if l2 <= f64::EPSILON {
        0.0
    } else {
        2.0 * local.y / l2
    }
}

pub fn pure_pursuit(pose: Pose2, path: &Polyline, p: &ControlParams) -> Command {
    let proj = path.project(pose.position());
    let total = path.length();
    if pose.position().dist(path.end()) <= p.goal_tol_m && proj.s >= total - p.lookahead_m {
        return Command::STOP;
    }
    let goal = path.point_at((proj.s + p.lookahead_m).min(total));
    let kappa = chord_curvature(pose.to_local(goal));
    Command::limited(p.v_nom, p.v_nom * kappa, p)
}

pub fn heading_controller(theta: f64, theta_star: f64, p: &ControlParams) -> f64 {
    (p.k_theta * wrap_angle(theta_star - theta)).clamp(-p.omega_max, p.omega_max)
}

/// State of the boundary-reflection wander policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum WanderMode {
    #[default]
    Cruise,
    Turn { target: f64 },
}

impl WanderMode {
    pub fn is_turn(&self) -> bool {
        matches!(self, WanderMode::Turn { .. })
    }
}

/// Target heading after a predicted boundary crossing from `pose`.
fn reflection_target(pose: Pose2, boundary: &Polygon, reach: f64, p: &ControlParams) -> f64 {
    let start = pose.position();
    let far = pose.along(reach + p.margin_m);
    let mut first: Option<(f64, usize)> = None;
    for (i, (a, b)) in boundary.edges().enumerate() {
        if let Some(t) = segment_crossing(start, far, a, b) {
            if first.is_none_or(|(ft, _)| t < ft) {
                first = Some((t, i));
            }
        }
    }
    // Without a crossing the probe left the eroded region near a vertex.
    let edge = first.map_or_else(|| boundary.nearest_edge(pose.along(reach)), |(_, i)| i);
    let (a, b) = boundary.edge(edge);
    let phi = (b.y - a.y).atan2(b.x - a.x);
    let reflected = reflect_heading(pose.theta, phi);
    let probe = start + Point2::from_polar(reach, reflected);
    if boundary.contains_with_margin(probe, p.margin_m) {
        reflected
    } else {
        wrap_angle(pose.theta + std::f64::consts::PI)
    }
}

/// CRUISE drives straight until a probe `horizon_s · v_nom` ahead leaves the
/// boundary eroded by `margin_m`; TURN rotates in place to the reflected
/// heading.
pub fn boundary_reflect_policy(
    pose: Pose2,
    boundary: &Polygon,
    p: &ControlParams,
    mode: WanderMode,
) -> Result<(Command, WanderMode), ControlError> {
    if !boundary.contains(pose.position()) {
        return Err(ControlError::OutsideBoundary { x: pose.x, y: pose.y });
    }
    if let WanderMode::Turn { target } = mode {
        if wrap_angle(target - pose.theta).abs() >= p.heading_tol_rad {
            let omega = heading_controller(pose.theta, target, p);
            return Ok((Command::new(0.0, omega), mode));
        }
    }
    let reach = p.horizon_s * p.v_nom;
    if boundary.contains_with_margin(pose.along(reach), p.margin_m) {
        return Ok((Command::limited(p.v_nom, 0.0, p), WanderMode::Cruise));
    }
    let target = reflection_target(pose, boundary, reach, p);
    let omega = heading_controller(pose.theta, target, p);
    Ok((Command::new(0.0, omega), WanderMode::Turn { target }))
}

/// A body the ego robot must keep clear of, moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub center: Point2,
    pub velocity: Point2,
    pub radius: f64,
}

impl Neighbor {
    pub fn from_track(track: &Track, radius: f64) -> Self {
        Self { center: track.pose_est.position(), velocity: track.planar_velocity(), radius }
    }
}

/// Sample instants `0, h/9, …, h`.
pub fn horizon_instants(horizon: f64) -> impl Iterator<Item = f64> {
    (0..HORIZON_SAMPLES).map(move |k| horizon * k as f64 / (HORIZON_SAMPLES - 1) as f64)
}

/// Stops the robot when, driving `cmd` from its estimated pose, it would come
/// within `r_safe_m` of any neighbor inside the horizon.
pub fn safety_governor(
    cmd: Command,
    ego: &Track,
    ego_radius: f64,
    others: &[Neighbor],
    p: &ControlParams,
) -> Command {
    if others.is_empty() {
        return cmd;
    }
    for t in horizon_instants(p.horizon_s) {
        let ego_at = integrate_unicycle(ego.pose_est, cmd.v, cmd.omega, t).position();
        for o in others {
            let other_at = o.center + o.velocity * t;
            if ego_at.dist(other_at) - ego_radius - o.radius < p.r_safe_m {
                return Command::STOP;
            }
        }
    }
    cmd
}

//! The central coordinator: per-robot mission modes, boustrophedon coverage
//! planning and accounting, and priority-by-id deconfliction.

use crate::control::{
    boundary_reflect_policy, heading_controller, horizon_instants, predict_pose, pure_pursuit,
    safety_governor, Command, ControlError, ControlParams, Neighbor, WanderMode,
};
use crate::geometry::{wrap_angle, GeometryError, Point2, Polygon, Polyline};
use crate::perception::{best_track, Track};
use crate::sim::{integrate_unicycle, Pose2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinationError {
    #[error("coverage polygon must be convex")]
    NonConvexPolygon,
    #[error("lane width {0} leaves no lane inside the polygon")]
    LaneWidthTooLarge(f64),
    #[error("invalid coverage parameter `{0}`")]
    InvalidCoverage(&'static str),
    #[error("robot {0} has no mission entry")]
    UnknownRobot(u8),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// What a robot is asked to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MissionMode {
    Idle,
    FollowPath {
        path: Polyline,
    },
    BoundedWander {
        boundary: Polygon,
    },
    Coverage {
        area: Polygon,
        lane_width: f64,
        tool_radius: f64,
        #[serde(default)]
        heading: f64,
    },
}

impl MissionMode {
    pub fn name(&self) -> &'static str {
        match self {
            MissionMode::Idle => "idle",
            MissionMode::FollowPath { .. } => "follow_path",
            MissionMode::BoundedWander { .. } => "bounded_wander",
            MissionMode::Coverage { .. } => "coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconflictParams {
    pub enabled: bool,
    pub d_min: f64,
    pub horizon_s: f64,
}

impl Default for DeconflictParams {
    fn default() -> Self {
        Self { enabled: true, d_min: 0.5, horizon_s: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RobotMission {
    mode: MissionMode,
    body_radius: f64,
    /// Planned lanes for coverage mode.
    coverage_path: Option<Polyline>,
}

/// Mission store: one mode per known robot plus shared parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub arena: Polygon,
    pub deconfliction: DeconflictParams,
    robots: BTreeMap<u8, RobotMission>,
}

impl Mission {
    pub fn new(arena: Polygon, deconfliction: DeconflictParams) -> Self {
        Self { arena, deconfliction, robots: BTreeMap::new() }
    }

    /// Registers a robot in idle mode.
    pub fn add_robot(&mut self, id: u8, body_radius: f64) {
        self.robots.insert(id, RobotMission { mode: MissionMode::Idle, body_radius, coverage_path: None });
    }

    pub fn set_mode(&mut self, id: u8, mode: MissionMode) -> Result<(), CoordinationError> {
        let entry = self.robots.get_mut(&id).ok_or(CoordinationError::UnknownRobot(id))?;
        let coverage_path = match &mode {
            MissionMode::Coverage { area, lane_width, tool_radius, heading } => {
                if !(*tool_radius > 0.0) {
                    return Err(CoordinationError::InvalidCoverage("tool_radius"));
                }
                Some(plan_coverage(area, *lane_width, *heading)?)
            }
            _ => None,
        };
        entry.mode = mode;
        entry.coverage_path = coverage_path;
        Ok(())
    }

    pub fn mode(&self, id: u8) -> Option<&MissionMode> {
        self.robots.get(&id).map(|r| &r.mode)
    }

    pub fn coverage_path(&self, id: u8) -> Option<&Polyline> {
        self.robots.get(&id).and_then(|r| r.coverage_path.as_ref())
    }

    /// Path a robot is steering along, if any.
    pub fn active_path(&self, id: u8) -> Option<&Polyline> {
        let r = self.robots.get(&id)?;
        match &r.mode {
            MissionMode::FollowPath { path } => Some(path),
            MissionMode::Coverage { .. } => r.coverage_path.as_ref(),
            _ => None,
        }
    }

    pub fn body_radius(&self, id: u8) -> Option<f64> {
        self.robots.get(&id).map(|r| r.body_radius)
    }

    pub fn robot_ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.robots.keys().copied()
    }
}

// ── Coverage ─────────────────────────────────────────────────────────────

fn rotate(p: Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

/// Chord of a convex polygon along the horizontal line at `y`.
fn horizontal_chord(vertices: &[Point2], y: f64) -> Option<(f64, f64)> {
    let n = vertices.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        if (a.y - y) * (b.y - y) > 0.0 {
            continue;
        }
        if a.y == b.y {
            lo = lo.min(a.x.min(b.x));
            hi = hi.max(a.x.max(b.x));
        } else {
            let x = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Boustrophedon lanes across a convex polygon, `lane_width` apart and
/// parallel to `heading`.
pub fn plan_coverage(poly: &Polygon, lane_width: f64, heading: f64) -> Result<Polyline, CoordinationError> {
    if !poly.is_convex() {
        return Err(CoordinationError::NonConvexPolygon);
    }
    if !(lane_width > 0.0 && lane_width.is_finite()) {
        return Err(CoordinationError::InvalidCoverage("lane_width"));
    }
    let local: Vec<Point2> = poly.vertices().iter().map(|&p| rotate(p, -heading)).collect();
    let y_min = local.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y_max = local.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);

    let mut points: Vec<Point2> = Vec::new();
    let mut k = 0usize;
    loop {
        let y = y_min + lane_width / 2.0 + k as f64 * lane_width;
        if y >= y_max {
            break;
        }
        if let Some((x0, x1)) = horizontal_chord(&local, y) {
            let (a, b) = if k.is_multiple_of(2) { (x0, x1) } else { (x1, x0) };
            for x in [a, b] {
                let q = rotate(Point2::new(x, y), heading);
                if points.last().is_none_or(|last| last.dist(q) > 1e-9) {
                    points.push(q);
                }
            }
        }
        k += 1;
    }
    if points.len() < 2 {
        return Err(CoordinationError::LaneWidthTooLarge(lane_width));
    }
    Ok(Polyline::new(points)?)
}

/// Cell grid over a polygon's bounding box with a coverage flag per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub origin: Point2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    mask: Vec<bool>,
    covered: Vec<bool>,
    mask_count: usize,
    covered_count: usize,
}

impl CoverageGrid {
    pub fn new(poly: &Polygon, cell_size: f64) -> Result<Self, CoordinationError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(CoordinationError::InvalidCoverage("cell_size"));
        }
        let (lo, hi) = poly.bounds();
        let width = (((hi.x - lo.x) / cell_size).ceil() as usize).max(1);
        let height = (((hi.y - lo.y) / cell_size).ceil() as usize).max(1);
        let mut mask = vec![false; width * height];
        for j in 0..height {
            for i in 0..width {
                let c = Point2::new(lo.x + (i as f64 + 0.5) * cell_size, lo.y + (j as f64 + 0.5) * cell_size);
                mask[j * width + i] = poly.contains(c);
            }
        }
        let mask_count = mask.iter().filter(|&&m| m).count();
        Ok(Self {
            origin: lo,
            cell_size,
            width,
            height,
            covered: vec![false; width * height],
            mask,
            mask_count,
            covered_count: 0,
        })
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.width + i]
    }

    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        self.covered[j * self.width + i]
    }

    pub fn mask_count(&self) -> usize {
        self.mask_count
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    pub fn fraction(&self) -> f64 {
        if self.mask_count == 0 {
            0.0
        } else {
            self.covered_count as f64 / self.mask_count as f64
        }
    }

    /// Marks masked cells whose centers lie within `tool_radius` of `p`.
    pub fn mark(&mut self, p: Point2, tool_radius: f64) {
        let cs = self.cell_size;
        let to_index = |v: f64, origin: f64, n: usize| -> (usize, usize) {
            let a = ((v - tool_radius - origin) / cs - 0.5).floor().max(0.0) as usize;
            let b = ((v + tool_radius - origin) / cs - 0.5).ceil().max(0.0) as usize;
            (a.min(n), (b + 1).min(n))
        };
        let (i0, i1) = to_index(p.x, self.origin.x, self.width);
        let (j0, j1) = to_index(p.y, self.origin.y, self.height);
        let r2 = tool_radius * tool_radius;
        for j in j0..j1 {
            for i in i0..i1 {
                let k = j * self.width + i;
                if !self.mask[k] || self.covered[k] {
                    continue;
                }
                let d = self.cell_center(i, j) - p;
                if d.dot(d) <= r2 {
                    self.covered[k] = true;
                    self.covered_count += 1;
                }
            }
        }
    }
}

pub fn update_coverage(grid: &CoverageGrid, pose: Pose2, tool_radius: f64) -> CoverageGrid {
    let mut next = grid.clone();
    next.mark(pose.position(), tool_radius);
    next
}

// ── Deconfliction ────────────────────────────────────────────────────────

/// Planar positions at the horizon sample instants under `cmd`.
fn sampled_positions(pose: Pose2, cmd: Command, horizon: f64) -> Vec<Point2> {
    horizon_instants(horizon)
        .map(|t| integrate_unicycle(pose, cmd.v, cmd.omega, t).position())
        .collect()
}

/// Pairwise priority-by-id deconfliction in exactly two passes: robots that
/// would come closer than `d_min` plus both body radii have the higher id
/// stopped; the second pass re-checks with the first pass's stops applied.
pub fn deconflict(
    tracks: &[Track],
    desired: &BTreeMap<u8, Command>,
    body_radius: impl Fn(u8) -> f64,
    d_min: f64,
    horizon_s: f64,
) -> BTreeMap<u8, Command> {
    let poses: BTreeMap<u8, Pose2> = desired
        .keys()
        .filter_map(|&id| best_track(tracks, id).map(|tr| (id, tr.pose_est)))
        .collect();
    let ids: Vec<u8> = poses.keys().copied().collect();
    let mut out = desired.clone();
    let mut stopped: BTreeSet<u8> = BTreeSet::new();

    for _pass in 0..2 {
        let samples: BTreeMap<u8, Vec<Point2>> = ids
            .iter()
            .map(|&id| (id, sampled_positions(poses[&id], out[&id], horizon_s)))
            .collect();
        let mut newly = Vec::new();
        for (a_idx, &a) in ids.iter().enumerate() {
            for &b in &ids[a_idx + 1..] {
                if stopped.contains(&b) || newly.contains(&b) {
                    continue;
                }
                let limit = d_min + body_radius(a) + body_radius(b);
                let closest = samples[&a]
                    .iter()
                    .zip(&samples[&b])
                    .map(|(p, q)| p.dist(*q))
                    .fold(f64::INFINITY, f64::min);
                if closest < limit {
                    newly.push(b);
                }
            }
        }
        for id in newly {
            stopped.insert(id);
            out.insert(id, Command::STOP);
        }
    }
    out
}

// ── Mission step ─────────────────────────────────────────────────────────

/// Mutable per-robot policy state carried between control ticks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoordinatorState {
    pub wander: BTreeMap<u8, WanderMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub robot_id: u8,
    pub from: WanderMode,
    pub to: WanderMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionOutput {
    pub commands: BTreeMap<u8, Command>,
    pub state: CoordinatorState,
    pub transitions: Vec<ModeTransition>,
}

/// Drive back toward the boundary's interior after an escape.
fn recover_inside(pose: Pose2, boundary: &Polygon, p: &ControlParams) -> Command {
    let c = boundary.centroid() - pose.position();
    let target = c.y.atan2(c.x);
    let err = wrap_angle(target - pose.theta).abs();
    let v = if err < std::f64::consts::FRAC_PI_4 { p.v_nom.min(p.v_max) } else { 0.0 };
    Command::new(v, heading_controller(pose.theta, target, p))
}

/// One control tick for every robot in the mission.
pub fn mission_step(
    mission: &Mission,
    tracks: &[Track],
    obstacles: &[Neighbor],
    params: &ControlParams,
    state: &CoordinatorState,
) -> MissionOutput {
    let mut next = state.clone();
    let mut transitions = Vec::new();
    let mut desired = BTreeMap::new();

    for (&id, robot) in &mission.robots {
        let Some(track) = best_track(tracks, id).filter(|tr| tr.is_live()) else {
            desired.insert(id, Command::STOP);
            continue;
        };
        let pose = predict_pose(track, params.tau_s).unwrap_or(track.pose_est);
        let cmd = match &robot.mode {
            MissionMode::Idle => Command::STOP,
            MissionMode::FollowPath { path } => pure_pursuit(pose, path, params),
            MissionMode::Coverage { .. } => match &robot.coverage_path {
                Some(path) => pure_pursuit(pose, path, params),
                None => Command::STOP,
            },
            MissionMode::BoundedWander { boundary } => {
                let before = state.wander.get(&id).copied().unwrap_or_default();
                let (cmd, after) = match boundary_reflect_policy(pose, boundary, params, before) {
                    Ok(r) => r,
                    Err(ControlError::OutsideBoundary { .. }) => {
                        (recover_inside(pose, boundary, params), WanderMode::Cruise)
                    }
                    Err(_) => (Command::STOP, before),
                };
                if before != after {
                    transitions.push(ModeTransition { robot_id: id, from: before, to: after });
                }
                next.wander.insert(id, after);
                cmd
            }
        };

        let mut others: Vec<Neighbor> = obstacles.to_vec();
        for (&other, other_robot) in &mission.robots {
            if other == id {
                continue;
            }
            if let Some(tr) = best_track(tracks, other).filter(|tr| tr.is_live()) {
                others.push(Neighbor::from_track(tr, other_robot.body_radius));
            }
        }
        let ego = Track { pose_est: pose, ..track.clone() };
        desired.insert(id, safety_governor(cmd, &ego, robot.body_radius, &others, params));
    }

    let commands = if mission.deconfliction.enabled {
        deconflict(
            tracks,
            &desired,
            |id| mission.body_radius(id).unwrap_or(0.0),
            mission.deconfliction.d_min,
            mission.deconfliction.horizon_s,
        )
    } else {
        desired
    };
    MissionOutput { commands, state: next, transitions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::TrackStatus;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn track(id: u8, pose: Pose2, v: f64) -> Track {
        let (s, c) = pose.theta.sin_cos();
        Track {
            robot_id: id,
            pose_est: pose,
            rates: [v * c, v * s, 0.0],
            status: TrackStatus::Confirmed,
            hits: 5,
            misses: 0,
            last_update: 0.0,
        }
    }

    #[test]
    fn unit_square_two_lanes() {
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let path = plan_coverage(&sq, 0.5, 0.0).unwrap();
        assert_eq!(path.points(), &[p(0.0, 0.25), p(1.0, 0.25), p(1.0, 0.75), p(0.0, 0.75)]);
        assert_eq!(plan_coverage(&sq, 2.0, 0.0), Err(CoordinationError::LaneWidthTooLarge(2.0)));
    }

    #[test]
    fn non_convex_is_rejected() {
        let l = Polygon::new(vec![p(0.0, 0.0), p(2.0, 0.0), p(2.0, 1.0), p(1.0, 1.0), p(1.0, 2.0), p(0.0, 2.0)])
            .unwrap();
        assert_eq!(plan_coverage(&l, 0.5, 0.0), Err(CoordinationError::NonConvexPolygon));
    }

    #[test]
    fn rotated_plan_stays_inside() {
        let hex: Vec<Point2> = (0..6)
            .map(|k| Point2::from_polar(4.0, k as f64 * std::f64::consts::PI / 3.0 + 0.1))
            .collect();
        let poly = Polygon::new(hex).unwrap();
        for heading in [0.0, 0.4, 1.3, -2.0] {
            let path = plan_coverage(&poly, 0.7, heading).unwrap();
            for w in path.points().windows(2) {
                for k in 0..=20 {
                    let q = w[0] + (w[1] - w[0]) * (k as f64 / 20.0);
                    assert!(poly.contains(q) || poly.distance_to_boundary(q) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ideal_execution_covers_square() {
        let sq = Polygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let path = plan_coverage(&sq, 2.0, 0.0).unwrap();
        let mut grid = CoverageGrid::new(&sq, 0.1).unwrap();
        let step = 0.02;
        let n = (path.length() / step).ceil() as usize;
        for k in 0..=n {
            grid.mark(path.point_at(k as f64 * step), 1.0);
        }
        assert!(grid.fraction() >= 0.99, "{}", grid.fraction());
    }

    #[test]
    fn coverage_update_matches_brute_force_disk() {
        let sq = Polygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let grid = CoverageGrid::new(&sq, 0.2).unwrap();
        let center = p(5.03, 4.91);
        let r = 2.5 * 0.2;
        let marked = update_coverage(&grid, Pose2::new(center.x, center.y, 0.0), r);
        let mut brute = 0;
        for j in 0..grid.height {
            for i in 0..grid.width {
                let c = Point2::new((i as f64 + 0.5) * 0.2, (j as f64 + 0.5) * 0.2);
                if c.dist(center) <= r {
                    brute += 1;
                }
            }
        }
        assert_eq!(marked.covered_count(), brute);
        let again = update_coverage(&marked, Pose2::new(center.x, center.y, 0.0), r);
        assert_eq!(again, marked);
    }

    #[test]
    fn coverage_respects_mask() {
        let tri = Polygon::new(vec![p(0.0, 0.0), p(4.0, 0.0), p(0.0, 4.0)]).unwrap();
        let mut grid = CoverageGrid::new(&tri, 0.5).unwrap();
        grid.mark(p(4.5, 4.5), 1.0);
        assert_eq!(grid.covered_count(), 0);
        grid.mark(p(4.5, 4.5), 10.0);
        assert_eq!(grid.covered_count(), grid.mask_count());
        assert_eq!(grid.fraction(), 1.0);
        for j in 0..grid.height {
            for i in 0..grid.width {
                assert!(!grid.is_covered(i, j) || grid.is_masked(i, j));
            }
        }
    }

    fn radius(_: u8) -> f64 {
        0.2
    }

    #[test]
    fn far_apart_robots_are_untouched() {
        let tracks = vec![track(0, Pose2::new(0.0, 0.0, 0.0), 0.1), track(1, Pose2::new(50.0, 0.0, 0.0), 0.1)];
        let desired: BTreeMap<_, _> = [(0, Command::new(0.1, 0.0)), (1, Command::new(0.1, 0.0))].into();
        assert_eq!(deconflict(&tracks, &desired, radius, 0.5, 3.0), desired);
    }

    #[test]
    fn head_on_pair_stops_higher_id() {
        let tracks = vec![
            track(0, Pose2::new(0.0, 0.0, 0.0), 0.5),
            track(1, Pose2::new(3.0, 0.0, std::f64::consts::PI), 0.5),
        ];
        let desired: BTreeMap<_, _> = [(0, Command::new(0.5, 0.0)), (1, Command::new(0.5, 0.0))].into();
        let out = deconflict(&tracks, &desired, radius, 0.5, 3.0);
        assert_eq!(out[&0], desired[&0]);
        assert_eq!(out[&1], Command::STOP);
    }

    /// Independent two-pass reference: explicit sample loops, no sharing
    /// with the implementation's helpers.
    fn reference(
        poses: &[(u8, Pose2)],
        cmds: &BTreeMap<u8, Command>,
        d_min: f64,
        horizon: f64,
    ) -> BTreeMap<u8, Command> {
        let pos = |pose: Pose2, c: Command, t: f64| -> Point2 {
            // fine Euler integration is close enough at these speeds
            let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
            let n = 2000;
            let h = t / n as f64;
            for _ in 0..n {
                x += c.v * th.cos() * h;
                y += c.v * th.sin() * h;
                th += c.omega * h;
            }
            Point2::new(x, y)
        };
        let mut cur = cmds.clone();
        for _ in 0..2 {
            let snapshot = cur.clone();
            let mut to_stop = vec![];
            for (i, &(a, pa)) in poses.iter().enumerate() {
                for &(b, pb) in &poses[i + 1..] {
                    let mut closest = f64::INFINITY;
                    for k in 0..10 {
                        let t = horizon * k as f64 / 9.0;
                        closest = closest.min(pos(pa, snapshot[&a], t).dist(pos(pb, snapshot[&b], t)));
                    }
                    if closest < d_min + 0.4 {
                        to_stop.push(b);
                    }
                }
            }
            for b in to_stop {
                cur.insert(b, Command::STOP);
            }
        }
        cur
    }

    #[test]
    fn three_robot_convergence_matches_reference() {
        let poses = vec![
            (0u8, Pose2::new(-3.0, 0.0, 0.0)),
            (1u8, Pose2::new(0.0, -3.0, std::f64::consts::FRAC_PI_2)),
            (2u8, Pose2::new(3.0, 0.2, std::f64::consts::PI)),
        ];
        let tracks: Vec<Track> = poses.iter().map(|&(id, pose)| track(id, pose, 0.5)).collect();
        for speed in [0.3, 0.5, 0.8, 1.0] {
            let desired: BTreeMap<_, _> = poses.iter().map(|&(id, _)| (id, Command::new(speed, 0.0))).collect();
            let got = deconflict(&tracks, &desired, radius, 0.5, 4.0);
            assert_eq!(got, reference(&poses, &desired, 0.5, 4.0), "speed {speed}");
            assert_eq!(got[&0], desired[&0]);
        }
    }

    fn mission_with(mode: MissionMode) -> Mission {
        let mut m = Mission::new(Polygon::rectangle(-20.0, -20.0, 20.0, 20.0).unwrap(), DeconflictParams::default());
        m.add_robot(0, 0.2);
        m.set_mode(0, mode).unwrap();
        m
    }

    #[test]
    fn idle_mission_stops_everyone() {
        let mut m = mission_with(MissionMode::Idle);
        m.add_robot(1, 0.2);
        let tracks = vec![track(0, Pose2::default(), 0.0), track(1, Pose2::new(5.0, 0.0, 0.0), 0.0)];
        let out = mission_step(&m, &tracks, &[], &ControlParams::default(), &CoordinatorState::default());
        assert!(out.commands.values().all(|c| *c == Command::STOP));
        assert_eq!(out.commands.len(), 2);
    }

    #[test]
    fn aligned_follow_path_drives_straight() {
        let path = Polyline::new(vec![p(0.0, 0.0), p(10.0, 0.0)]).unwrap();
        let m = mission_with(MissionMode::FollowPath { path });
        let params = ControlParams::default();
        let tracks = vec![track(0, Pose2::new(2.0, 0.0, 0.0), 0.0)];
        let out = mission_step(&m, &tracks, &[], &params, &CoordinatorState::default());
        assert_eq!(out.commands[&0], Command::new(params.v_nom, 0.0));
    }

    #[test]
    fn lost_track_stops_robot() {
        let path = Polyline::new(vec![p(0.0, 0.0), p(10.0, 0.0)]).unwrap();
        let m = mission_with(MissionMode::FollowPath { path });
        let mut tentative = track(0, Pose2::default(), 0.0);
        tentative.status = TrackStatus::Tentative;
        for tracks in [vec![], vec![tentative]] {
            let out = mission_step(&m, &tracks, &[], &ControlParams::default(), &CoordinatorState::default());
            assert_eq!(out.commands[&0], Command::STOP);
        }
    }

    #[test]
    fn wander_records_turn_transition() {
        let boundary = Polygon::rectangle(-5.0, -5.0, 5.0, 5.0).unwrap();
        let m = mission_with(MissionMode::BoundedWander { boundary });
        let tracks = vec![track(0, Pose2::new(0.0, -4.6, -std::f64::consts::FRAC_PI_2), 0.0)];
        let out = mission_step(&m, &tracks, &[], &ControlParams::default(), &CoordinatorState::default());
        assert_eq!(out.transitions.len(), 1);
        assert!(out.transitions[0].to.is_turn());
        assert!(out.state.wander[&0].is_turn());
    }

    #[test]
    fn mission_step_is_deterministic() {
        let boundary = Polygon::rectangle(-5.0, -5.0, 5.0, 5.0).unwrap();
        let mut m = mission_with(MissionMode::BoundedWander { boundary });
        m.add_robot(1, 0.2);
        let sq = Polygon::rectangle(0.0, 0.0, 4.0, 4.0).unwrap();
        m.set_mode(1, MissionMode::Coverage { area: sq, lane_width: 1.0, tool_radius: 0.5, heading: 0.0 })
            .unwrap();
        let tracks = vec![track(0, Pose2::new(1.0, 1.0, 0.3), 0.4), track(1, Pose2::new(0.5, 0.5, 0.0), 0.2)];
        let params = ControlParams { tau_s: 0.2, ..Default::default() };
        let a = mission_step(&m, &tracks, &[], &params, &CoordinatorState::default());
        let b = mission_step(&m, &tracks, &[], &params, &CoordinatorState::default());
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_robot_mode_is_rejected() {
        let mut m = mission_with(MissionMode::Idle);
        assert_eq!(m.set_mode(9, MissionMode::Idle), Err(CoordinationError::UnknownRobot(9)));
    }
}
